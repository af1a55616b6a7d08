//! Mapping templates: which SR concept feeds which output field, and how
//! coded values are renamed on the way.
//!
//! ```text
//! map AI_PRIORITY concept 99FLOWGATE:PRIORITY { HIGH=HIGH, MEDIUM=MEDIUM, LOW=LOW } default LOW
//! ```

use std::collections::HashSet;

use super::{Code, Error, Payload, SrNode};

pub const STANDARD_TEMPLATE: &str = "\
map AI_PRIORITY concept 99FLOWGATE:PRIORITY { HIGH=HIGH, MEDIUM=MEDIUM, LOW=LOW }
map AI_DETECTION concept 99FLOWGATE:DETECTION { POS=POS, NEG=NEG }
";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingEntry {
    pub field: String,
    pub concept: Code,
    pub value_map: Vec<(String, String)>,
    pub default: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingTemplate {
    pub entries: Vec<MappingEntry>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<MappingEntry, Error> {
    let col = |s: &str| s.as_ptr() as usize - line.as_ptr() as usize + 1;
    let (head, braces, tail) = match line.find('{') {
        Some(open) => {
            let close = line[open..]
                .find('}')
                .map(|i| open + i)
                .ok_or_else(|| syntax(line_no, open + 1, "unclosed {"))?;
            (&line[..open], Some(&line[open + 1..close]), &line[close + 1..])
        }
        None => {
            let cut = line.find(" default ").map_or(line.len(), |i| i);
            (&line[..cut], None, &line[cut..])
        }
    };
    let words: Vec<&str> = head.split_whitespace().collect();
    let [kw, field, concept_kw, concept] = words[..] else {
        return Err(syntax(line_no, 1, "expected: map <FIELD> concept <scheme>:<value>"));
    };
    if kw != "map" || concept_kw != "concept" {
        return Err(syntax(line_no, 1, "expected: map <FIELD> concept <scheme>:<value>"));
    }
    let (scheme, value) = concept
        .split_once(':')
        .filter(|(s, v)| !s.is_empty() && !v.is_empty())
        .ok_or_else(|| syntax(line_no, col(concept), "concept must be <scheme>:<value>"))?;
    let mut value_map = Vec::new();
    if let Some(body) = braces {
        for pair in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| syntax(line_no, col(pair), format!("expected code=out, got {pair:?}")))?;
            value_map.push((k.to_string(), v.to_string()));
        }
    }
    let tail_words: Vec<&str> = tail.split_whitespace().collect();
    let default = match tail_words[..] {
        [] => None,
        ["default", out] => Some(out.to_string()),
        _ => return Err(syntax(line_no, col(tail.trim_start()), "expected: default <out>")),
    };
    Ok(MappingEntry {
        field: field.to_string(),
        concept: Code::new(value, scheme, ""),
        value_map,
        default,
    })
}

pub fn parse_mapping_template(text: &str) -> Result<MappingTemplate, Error> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let entry = parse_line(i + 1, line)?;
        if !seen.insert(entry.field.clone()) {
            return Err(Error::DuplicateTarget {
                field: entry.field,
                line: i + 1,
            });
        }
        entries.push(entry);
    }
    Ok(MappingTemplate { entries })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    pub fields: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl Extraction {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.iter().find(|(f, _)| f == field).map(|(_, v)| v.as_str())
    }
}

fn render(payload: &Payload) -> Option<String> {
    match payload {
        Payload::Code(c) => Some(c.value.clone()),
        Payload::Text(t) => Some(t.clone()),
        Payload::Num { value, .. } => Some(crate::dicom::format_ds(*value)),
        Payload::Scoord { points, .. } => Some(
            points
                .iter()
                .flat_map(|(x, y)| [x.to_string(), y.to_string()])
                .collect::<Vec<_>>()
                .join(","),
        ),
        Payload::Container | Payload::Opaque { .. } => None,
    }
}

/// Resolves each template entry against the tree, depth first in document
/// order. Missing concepts fall back to the entry default or are omitted.
pub fn extract_fields(tree: &SrNode, tpl: &MappingTemplate) -> Extraction {
    let mut out = Extraction::default();
    let nodes = tree.walk();
    for entry in &tpl.entries {
        let hit = nodes.iter().find_map(|n| {
            let concept = n.concept.as_ref()?;
            if !concept.same_concept(&entry.concept) {
                return None;
            }
            Some((n, render(&n.payload)?))
        });
        match hit {
            Some((node, raw)) => {
                let value = if let Payload::Code(_) = node.payload {
                    match entry.value_map.iter().find(|(k, _)| *k == raw) {
                        Some((_, v)) => v.clone(),
                        None if entry.value_map.is_empty() => raw,
                        None => {
                            out.warnings.push(format!("{}: code {raw:?} not in value map, passed through", entry.field));
                            raw
                        }
                    }
                } else {
                    raw
                };
                out.fields.push((entry.field.clone(), value));
            }
            None => match &entry.default {
                Some(d) => out.fields.push((entry.field.clone(), d.clone())),
                None => out.warnings.push(format!(
                    "{}: concept {}:{} not found, omitted",
                    entry.field, entry.concept.scheme, entry.concept.value
                )),
            },
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_template_parses() {
        let t = parse_mapping_template(STANDARD_TEMPLATE).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[0].field, "AI_PRIORITY");
        assert_eq!(t.entries[0].concept.scheme, "99FLOWGATE");
        assert_eq!(t.entries[0].value_map.len(), 3);
    }

    #[test]
    fn default_and_braceless_forms() {
        let t = parse_mapping_template("map A concept X:Y default LOW\nmap B concept X:Z {Q=R} default S # note\n").unwrap();
        assert_eq!(t.entries[0].default.as_deref(), Some("LOW"));
        assert!(t.entries[0].value_map.is_empty());
        assert_eq!(t.entries[1].value_map, vec![("Q".to_string(), "R".to_string())]);
        assert_eq!(t.entries[1].default.as_deref(), Some("S"));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_mapping_template("map A concept X:Y\nmap A concept X:Z\n"),
            Err(Error::DuplicateTarget { line: 2, .. })
        ));
        assert!(matches!(parse_mapping_template("map A X:Y"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_mapping_template("map A concept XY"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_mapping_template("map A concept X:Y { Q }"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_mapping_template("map A concept X:Y { Q=R"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_mapping_template("map A concept X:Y junk"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn empty_template_extracts_nothing() {
        let t = parse_mapping_template("\n# nothing\n").unwrap();
        let tree = SrNode {
            concept: None,
            relationship: None,
            payload: Payload::Container,
            children: vec![],
        };
        assert_eq!(extract_fields(&tree, &t), Extraction::default());
    }
}
