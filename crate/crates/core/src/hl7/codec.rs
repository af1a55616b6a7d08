use super::{Delimiters, Error, Field, Hl7Message, Segment};

/// Replaces delimiter characters in a value with escape sequences.
pub fn escape(value: &str, d: &Delimiters) -> String {
    let e = d.escape;
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        let code = match c {
            _ if c == d.field => 'F',
            _ if c == d.component => 'S',
            _ if c == d.subcomponent => 'T',
            _ if c == d.repetition => 'R',
            _ if c == d.escape => 'E',
            _ => {
                out.push(c);
                continue;
            }
        };
        out.push(e);
        out.push(code);
        out.push(e);
    }
    out
}

/// Inverse of [`escape`]. Escape sequences other than the five delimiter
/// escapes are kept verbatim.
pub fn unescape(value: &str, d: &Delimiters) -> String {
    let chars: Vec<char> = value.chars().collect();
    let mut out = String::with_capacity(value.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == d.escape && i + 2 < chars.len() && chars[i + 2] == d.escape {
            let rep = match chars[i + 1] {
                'F' => Some(d.field),
                'S' => Some(d.component),
                'T' => Some(d.subcomponent),
                'R' => Some(d.repetition),
                'E' => Some(d.escape),
                _ => None,
            };
            if let Some(r) = rep {
                out.push(r);
                i += 3;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn encode_field(f: &Field, d: &Delimiters) -> String {
    f.0.iter()
        .map(|rep| {
            rep.iter()
                .map(|comp| comp.iter().map(|s| escape(s, d)).collect::<Vec<_>>().join(&d.subcomponent.to_string()))
                .collect::<Vec<_>>()
                .join(&d.component.to_string())
        })
        .collect::<Vec<_>>()
        .join(&d.repetition.to_string())
}

/// Splits on `sep` unless the separator is part of an escape sequence.
fn split_unescaped(s: &str, sep: char, esc: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_escape = false;
    for c in s.chars() {
        if c == esc {
            in_escape = !in_escape;
            cur.push(c);
        } else if c == sep && !in_escape {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

fn parse_field(s: &str, d: &Delimiters) -> Field {
    Field(
        split_unescaped(s, d.repetition, d.escape)
            .iter()
            .map(|rep| {
                split_unescaped(rep, d.component, d.escape)
                    .iter()
                    .map(|c| {
                        split_unescaped(c, d.subcomponent, d.escape)
                            .iter()
                            .map(|v| unescape(v, d))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    )
}

fn valid_id(id: &str) -> bool {
    id.len() == 3 && id.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

/// Segments joined by CR, each terminated by CR; trailing empty fields
/// are dropped.
pub(crate) fn encode_message(msg: &Hl7Message) -> Result<Vec<u8>, Error> {
    let d = &msg.delimiters;
    if !d.distinct() {
        return Err(Error::InvariantViolation("delimiters must be distinct punctuation".into()));
    }
    match msg.segments.first() {
        Some(s) if s.id == "MSH" => {}
        _ => return Err(Error::InvariantViolation("first segment must be MSH".into())),
    }
    let mut out = String::new();
    for seg in &msg.segments {
        if !valid_id(&seg.id) {
            return Err(Error::InvariantViolation(format!("bad segment id {:?}", seg.id)));
        }
        out.push_str(&seg.id);
        let skip = if seg.id == "MSH" {
            out.push(d.field);
            out.push_str(&d.encoding_characters());
            2
        } else {
            0
        };
        let fields = &seg.fields[skip.min(seg.fields.len())..];
        let used = fields.iter().rposition(|f| !f.is_empty()).map_or(0, |i| i + 1);
        for f in &fields[..used] {
            out.push(d.field);
            out.push_str(&encode_field(f, d));
        }
        out.push('\r');
    }
    Ok(out.into_bytes())
}

/// Parses a message; delimiters come from MSH. LF and CRLF terminators
/// are accepted.
pub fn parse_message(bytes: &[u8]) -> Result<Hl7Message, Error> {
    let text = String::from_utf8_lossy(bytes);
    if !text.starts_with("MSH") {
        return Err(Error::NotHl7);
    }
    let head: Vec<char> = text.chars().take(8).collect();
    if head.len() < 8 {
        return Err(Error::BadDelimiters);
    }
    let d = Delimiters {
        field: head[3],
        component: head[4],
        repetition: head[5],
        escape: head[6],
        subcomponent: head[7],
    };
    if !d.distinct() || text.chars().nth(8).is_some_and(|c| c != d.field && c != '\r' && c != '\n') {
        return Err(Error::BadDelimiters);
    }
    let mut segments = Vec::new();
    for line in text.split(['\r', '\n']).filter(|l| !l.is_empty()) {
        let (id, rest) = line.split_at(line.len().min(3));
        if !valid_id(id) {
            return Err(Error::InvariantViolation(format!("bad segment id {id:?}")));
        }
        let mut fields = Vec::new();
        let body = if id == "MSH" {
            fields.push(Field::text(&d.field.to_string()));
            fields.push(Field::text(&d.encoding_characters()));
            rest.get(5..).unwrap_or("")
        } else {
            rest
        };
        if let Some(body) = body.strip_prefix(d.field) {
            fields.extend(split_unescaped(body, d.field, d.escape).iter().map(|f| parse_field(f, &d)));
        } else if !body.is_empty() {
            return Err(Error::InvariantViolation(format!("segment {id} not followed by a field separator")));
        }
        segments.push(Segment::new(id, fields));
    }
    Ok(Hl7Message { delimiters: d, segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_table() {
        let d = Delimiters::default();
        assert_eq!(escape("A|B", &d), r"A\F\B");
        assert_eq!(escape(r"^&~\", &d), r"\S\\T\\R\\E\");
        assert_eq!(unescape(r"A\E\B", &d), r"A\B");
        assert_eq!(unescape(r"\H\x\", &d), r"\H\x\");
        assert_eq!(unescape(r"trailing\", &d), r"trailing\");
    }

    #[test]
    fn escaped_separator_does_not_split() {
        let d = Delimiters::default();
        let f = parse_field(r"A\F\B^C\S\D", &d);
        assert_eq!(f, Field::components(&["A|B", "C^D"]));
    }

    #[test]
    fn lf_and_crlf_accepted() {
        let m = parse_message(b"MSH|^~\\&|A\nPID|||1\r\nOBX|1\n").unwrap();
        assert_eq!(m.segments.len(), 3);
        assert_eq!(m.value("PID", 3).as_deref(), Some("1"));
    }

    #[test]
    fn rejects_non_hl7() {
        assert!(matches!(parse_message(b"PID|||1"), Err(Error::NotHl7)));
        assert!(matches!(parse_message(b"MSH|^^\\&|x"), Err(Error::BadDelimiters)));
        assert!(matches!(parse_message(b"MSH|^~"), Err(Error::BadDelimiters)));
    }

    #[test]
    fn trailing_empty_fields_trimmed() {
        let m = Hl7Message {
            delimiters: Delimiters::default(),
            segments: vec![
                Segment::new("MSH", vec![Field::text("|"), Field::text("^~\\&"), Field::text("A"), Field::empty()]),
                Segment::new("OBX", vec![Field::text("1"), Field::empty(), Field::empty()]),
            ],
        };
        assert_eq!(m.encode().unwrap(), b"MSH|^~\\&|A\rOBX|1\r");
    }
}
