//! Smart routing rules: sources, destinations and ordered rules parsed from
//! the section grammar, evaluated per instance, swapped atomically.
//!
//! Evaluation is first-match with opt-in `continue`. A `block` action stops
//! evaluation and clears destinations. When nothing matches the instance is
//! blocked (default deny). Any comparison against an absent attribute is
//! false, `!=` included; `not` then applies to that result.

mod engine;
mod expr;
mod holder;
mod morph;
mod oracle;

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::net::IpAddr;

use crate::conf::{parse_sections, quote, ConfError, Section};
use crate::dicom::{Tag, Vr};
use crate::dimse::AeTitle;

pub use engine::{evaluate_batch, evaluate_instance, Engine, Matcher};
pub use expr::{parse_expr, CmpOp, ExprError, Literal, MatchExpr, Pattern, Predicate, Selector};
pub use holder::{RulesetHolder, SwapMode};
pub use morph::{apply_morphs, MorphWarning};
pub use oracle::oracle_evaluate;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: unresolved reference to {name:?}")]
    UnresolvedReference { name: String, line: usize },
    #[error("line {line}: duplicate name {name:?}")]
    DuplicateName { name: String, line: usize },
    #[error("stale ruleset version {offered} (current {current})")]
    StaleVersion { current: u64, offered: u64 },
}

impl From<ConfError> for Error {
    fn from(e: ConfError) -> Self {
        Error::Syntax {
            line: e.line,
            column: e.column,
            message: e.message,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SourceKind {
    #[default]
    Modality,
    /// Results coming back from an AI receiver.
    Ai,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceDef {
    pub name: String,
    pub calling_ae: AeTitle,
    pub peer: Option<IpAddr>,
    pub kind: SourceKind,
}

impl SourceDef {
    pub fn new(name: &str, calling_ae: AeTitle) -> Self {
        SourceDef {
            name: name.to_string(),
            calling_ae,
            peer: None,
            kind: SourceKind::Modality,
        }
    }

    pub fn matches(&self, calling: &AeTitle, peer: Option<IpAddr>) -> bool {
        self.calling_ae == *calling && self.peer.is_none_or(|p| Some(p) == peer)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DestinationDef {
    pub name: String,
    pub host: String,
    pub port: u16,
    pub called_ae: AeTitle,
    pub calling_ae: Option<AeTitle>,
}

impl DestinationDef {
    pub fn endpoint(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RouteMode {
    Parallel,
    Serial,
}

impl fmt::Display for RouteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RouteMode::Parallel => "parallel",
            RouteMode::Serial => "serial",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub destinations: Vec<String>,
    pub mode: RouteMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Priority {
    Low,
    Medium,
    High,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::High => "HIGH",
            Priority::Medium => "MEDIUM",
            Priority::Low => "LOW",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Priority {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "HIGH" => Ok(Priority::High),
            "MEDIUM" => Ok(Priority::Medium),
            "LOW" => Ok(Priority::Low),
            other => Err(format!("priority must be HIGH, MEDIUM or LOW, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MorphOp {
    Set { tag: Tag, vr: Vr, value: String },
    Delete(Tag),
    Copy { from: Tag, to: Tag },
}

impl fmt::Display for MorphOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MorphOp::Set { tag, vr, value } => write!(f, "set {tag} {vr} {}", quote(value)),
            MorphOp::Delete(t) => write!(f, "delete {t}"),
            MorphOp::Copy { from, to } => write!(f, "copy {from} -> {to}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub when: MatchExpr,
    pub route: Option<Route>,
    pub block: bool,
    pub morphs: Vec<MorphOp>,
    pub priority: Option<Priority>,
    pub cont: bool,
}

impl Rule {
    pub fn new(name: &str, when: MatchExpr) -> Self {
        Rule {
            name: name.to_string(),
            when,
            route: None,
            block: false,
            morphs: Vec::new(),
            priority: None,
            cont: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleSet {
    pub version: u64,
    pub sources: Vec<SourceDef>,
    pub destinations: Vec<DestinationDef>,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn empty(version: u64) -> Self {
        RuleSet {
            version,
            sources: Vec::new(),
            destinations: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn destination(&self, name: &str) -> Option<&DestinationDef> {
        self.destinations.iter().find(|d| d.name == name)
    }

    pub fn source(&self, name: &str) -> Option<&SourceDef> {
        self.sources.iter().find(|s| s.name == name)
    }

    /// First source whose calling AE (and peer, when constrained) matches.
    pub fn resolve_source(&self, calling: &AeTitle, peer: Option<IpAddr>) -> Option<&SourceDef> {
        self.sources.iter().find(|s| s.matches(calling, peer))
    }

    /// Checks uniqueness of names and that every route target exists.
    pub fn validate(&self) -> Result<(), Error> {
        fn unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), Error> {
            let mut seen = HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    return Err(Error::DuplicateName {
                        name: n.to_string(),
                        line: 0,
                    });
                }
            }
            Ok(())
        }
        unique(self.sources.iter().map(|s| s.name.as_str()))?;
        unique(self.destinations.iter().map(|s| s.name.as_str()))?;
        unique(self.rules.iter().map(|s| s.name.as_str()))?;
        for r in &self.rules {
            for d in r.route.iter().flat_map(|r| &r.destinations) {
                if self.destination(d).is_none() {
                    return Err(Error::UnresolvedReference {
                        name: d.clone(),
                        line: 0,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockReason {
    Rule(String),
    NoMatch,
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::Rule(r) => write!(f, "rule {r}"),
            BlockReason::NoMatch => f.write_str("no-match"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub ruleset_version: u64,
    pub matched: Vec<String>,
    /// Deduplicated by name, first mention (and its mode) wins.
    pub destinations: Vec<(String, RouteMode)>,
    pub morphs: Vec<MorphOp>,
    pub priority: Option<Priority>,
    pub blocked: bool,
    pub block_reason: Option<BlockReason>,
}

fn parse_morph(text: &str) -> Result<MorphOp, (usize, String)> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let tag = |i: usize| -> Result<Tag, (usize, String)> {
        let w = words.get(i).ok_or((0, "missing tag".to_string()))?;
        w.parse::<Tag>().map_err(|_| (0, format!("bad tag {w:?}")))
    };
    match words.first().copied() {
        Some("delete") if words.len() == 2 => Ok(MorphOp::Delete(tag(1)?)),
        Some("copy") if words.len() == 4 && words[2] == "->" => Ok(MorphOp::Copy {
            from: tag(1)?,
            to: tag(3)?,
        }),
        Some("set") if words.len() >= 4 => {
            let t = tag(1)?;
            let vr_code = words[2];
            let vr = Vr::ALL
                .iter()
                .copied()
                .find(|v| v.code() == vr_code)
                .ok_or((0, format!("unknown VR {vr_code:?}")))?;
            if !morph::settable(vr) {
                return Err((0, format!("cannot set a value of VR {vr}")));
            }
            let after_vr = text.find('"').ok_or((0, "set needs a quoted value".to_string()))?;
            let value = unquote(&text[after_vr..]).map_err(|m| (after_vr, m))?;
            morph::check_value(vr, &value).map_err(|m| (after_vr, m))?;
            Ok(MorphOp::Set { tag: t, vr, value })
        }
        _ => Err((0, "morph must be set (gggg,eeee) VR \"value\", delete (gggg,eeee) or copy (gggg,eeee) -> (gggg,eeee)".into())),
    }
}

fn unquote(s: &str) -> Result<String, String> {
    let s = s.trim();
    let inner = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or("value must be a single quoted string")?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e) => out.push(e),
                None => return Err("dangling backslash".into()),
            },
            '"' => return Err("unescaped quote inside value".into()),
            c => out.push(c),
        }
    }
    Ok(out)
}

fn ident_ok(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn ae_value(e: &crate::conf::Entry) -> Result<AeTitle, Error> {
    e.value
        .parse::<AeTitle>()
        .map_err(|err| e.error(format!("bad AE title: {err}")).into())
}

/// Parses a rules file. The result carries version 1; callers re-stamp it.
pub fn parse_rules(text: &str) -> Result<RuleSet, Error> {
    rules_from_sections(&parse_sections(text)?, &[])
}

/// Builds a rule set from already-split sections, skipping the section
/// kinds in `ignore` (a gateway config embeds rules next to `[gateway]`).
pub fn rules_from_sections(sections: &[Section], ignore: &[&str]) -> Result<RuleSet, Error> {
    let mut rs = RuleSet::empty(1);
    let mut lines = (Vec::new(), Vec::new(), Vec::new());
    let mut route_refs: Vec<(String, usize)> = Vec::new();
    for s in sections {
        match s.kind.as_str() {
            "source" => {
                s.check_keys(&["calling_ae", "peer", "kind"])?;
                let name = s.name_or_err()?.to_string();
                let peer = match s.get("peer")? {
                    Some(e) => Some(e.parse::<IpAddr>()?),
                    None => None,
                };
                let kind = match s.get("kind")?.map(|e| (e, e.value.as_str())) {
                    None | Some((_, "modality")) => SourceKind::Modality,
                    Some((_, "ai")) => SourceKind::Ai,
                    Some((e, other)) => return Err(e.error(format!("kind must be modality or ai, got {other:?}")).into()),
                };
                lines.0.push(s.line);
                rs.sources.push(SourceDef {
                    name,
                    calling_ae: ae_value(s.require("calling_ae")?)?,
                    peer,
                    kind,
                });
            }
            "destination" => {
                s.check_keys(&["host", "port", "called_ae", "calling_ae"])?;
                let name = s.name_or_err()?.to_string();
                let port_entry = s.require("port")?;
                let port: u16 = port_entry.parse()?;
                if port == 0 {
                    return Err(port_entry.error("port must be 1-65535").into());
                }
                let host = s.require("host")?.value.clone();
                if host.is_empty() {
                    return Err(s.error("empty host").into());
                }
                lines.1.push(s.line);
                rs.destinations.push(DestinationDef {
                    name,
                    host,
                    port,
                    called_ae: ae_value(s.require("called_ae")?)?,
                    calling_ae: s.get("calling_ae")?.map(ae_value).transpose()?,
                });
            }
            "rule" => {
                s.check_keys(&["when", "route", "block", "morph", "priority", "continue"])?;
                let name = s.name_or_err()?;
                let w = s.require("when")?;
                let when = parse_expr(&w.value).map_err(|e| Error::Syntax {
                    line: w.line,
                    column: w.column + e.column - 1,
                    message: e.message,
                })?;
                let mut rule = Rule::new(name, when);
                if let Some(e) = s.get("route")? {
                    let (names, mode) = e
                        .value
                        .rsplit_once(':')
                        .ok_or_else(|| e.error("route must be name{, name} : parallel|serial"))?;
                    let mode = match mode.trim() {
                        "parallel" => RouteMode::Parallel,
                        "serial" => RouteMode::Serial,
                        other => return Err(e.error(format!("route mode must be parallel or serial, got {other:?}")).into()),
                    };
                    let destinations: Vec<String> = names.split(',').map(|n| n.trim().to_string()).collect();
                    if destinations.iter().any(|d| !ident_ok(d)) {
                        return Err(e.error("route needs one or more destination names").into());
                    }
                    route_refs.extend(destinations.iter().map(|d| (d.clone(), e.line)));
                    rule.route = Some(Route { destinations, mode });
                }
                if let Some(e) = s.get("block")? {
                    rule.block = e.bool()?;
                }
                if let Some(e) = s.get("continue")? {
                    rule.cont = e.bool()?;
                }
                if let Some(e) = s.get("priority")? {
                    rule.priority = Some(e.parse()?);
                }
                for e in s.all("morph") {
                    let op = parse_morph(&e.value).map_err(|(off, m)| Error::Syntax {
                        line: e.line,
                        column: e.column + off,
                        message: m,
                    })?;
                    rule.morphs.push(op);
                }
                lines.2.push(s.line);
                rs.rules.push(rule);
            }
            k if ignore.contains(&k) => {}
            other => return Err(s.error(format!("unknown section kind {other:?}")).into()),
        }
    }
    let dup = |names: Vec<&str>, at: &[usize]| -> Result<(), Error> {
        let mut seen = HashSet::new();
        for (n, line) in names.into_iter().zip(at) {
            if !seen.insert(n) {
                return Err(Error::DuplicateName {
                    name: n.to_string(),
                    line: *line,
                });
            }
        }
        Ok(())
    };
    dup(rs.sources.iter().map(|s| s.name.as_str()).collect(), &lines.0)?;
    dup(rs.destinations.iter().map(|s| s.name.as_str()).collect(), &lines.1)?;
    dup(rs.rules.iter().map(|s| s.name.as_str()).collect(), &lines.2)?;
    for (name, line) in route_refs {
        if rs.destination(&name).is_none() {
            return Err(Error::UnresolvedReference { name, line });
        }
    }
    Ok(rs)
}

/// Renders a rule set in the grammar `parse_rules` reads. The version is
/// not part of the text.
pub fn format_rules(rs: &RuleSet) -> String {
    let mut out = String::new();
    for s in &rs.sources {
        let _ = writeln!(out, "[source {}]\ncalling_ae = {}", s.name, s.calling_ae);
        if let Some(p) = s.peer {
            let _ = writeln!(out, "peer = {p}");
        }
        if s.kind == SourceKind::Ai {
            out.push_str("kind = ai\n");
        }
        out.push('\n');
    }
    for d in &rs.destinations {
        let _ = writeln!(out, "[destination {}]\nhost = {}\nport = {}\ncalled_ae = {}", d.name, d.host, d.port, d.called_ae);
        if let Some(c) = &d.calling_ae {
            let _ = writeln!(out, "calling_ae = {c}");
        }
        out.push('\n');
    }
    for r in &rs.rules {
        let _ = writeln!(out, "[rule {}]\nwhen = {}", r.name, r.when);
        if let Some(route) = &r.route {
            let _ = writeln!(out, "route = {} : {}", route.destinations.join(", "), route.mode);
        }
        if r.block {
            out.push_str("block = true\n");
        }
        for m in &r.morphs {
            let _ = writeln!(out, "morph = {m}");
        }
        if let Some(p) = r.priority {
            let _ = writeln!(out, "priority = {p}");
        }
        if r.cont {
            out.push_str("continue = true\n");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[source modality1]
calling_ae = MOD1

[source modality2]
calling_ae = MOD2
peer = 127.0.0.1

[destination pacs]
host = 127.0.0.1
port = 11112
called_ae = PACS

[destination ai]
host = localhost
port = 11113
called_ae = AI_RECEIVER
calling_ae = ROUTER

[rule block_m2]
when = source == "modality2"
block = true

[rule thick_ct]
when = modality == "CT" and slice_thickness >= 2.0
route = pacs, ai : parallel
morph = set (0008,0080) LO "CAII"
morph = delete (0009,0010)
morph = copy (0008,0050) -> (0020,0010)
priority = HIGH
continue = true

[rule everything]
when = true
route = pacs : serial
"#;

    #[test]
    fn parses_sample() {
        let rs = parse_rules(SAMPLE).unwrap();
        assert_eq!(rs.sources.len(), 2);
        assert_eq!(rs.destinations[1].calling_ae.as_ref().unwrap().as_str(), "ROUTER");
        assert_eq!(rs.rules.len(), 3);
        let r = &rs.rules[1];
        assert_eq!(r.morphs.len(), 3);
        assert!(r.cont);
        assert_eq!(r.priority, Some(Priority::High));
        assert_eq!(r.route.as_ref().unwrap().destinations, vec!["pacs", "ai"]);
        assert_eq!(rs.sources[1].peer, Some("127.0.0.1".parse().unwrap()));
    }

    #[test]
    fn minimal_config() {
        let rs = parse_rules("[destination pacs]\nhost = h\nport = 104\ncalled_ae = PACS\n[rule all]\nwhen = true\nroute = pacs : parallel\n").unwrap();
        assert_eq!(rs.rules.len(), 1);
    }

    #[test]
    fn format_round_trip() {
        let rs = parse_rules(SAMPLE).unwrap();
        let again = parse_rules(&format_rules(&rs)).unwrap();
        assert_eq!(again, rs);
    }

    #[test]
    fn unresolved_destination() {
        let err = parse_rules("[rule r]\nwhen = true\nroute = pacs2 : parallel\n").unwrap_err();
        assert_eq!(
            err,
            Error::UnresolvedReference {
                name: "pacs2".into(),
                line: 3
            }
        );
    }

    #[test]
    fn duplicate_names() {
        let err = parse_rules("[rule r]\nwhen = true\n[rule r]\nwhen = false\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateName { line: 3, .. }));
    }

    #[test]
    fn syntax_errors_point_into_the_line() {
        let err = parse_rules("[rule r]\nwhen = slice_thickness ~ \"x\"\n").unwrap_err();
        assert_eq!(
            err,
            Error::Syntax {
                line: 2,
                column: 26,
                message: "~ cannot be used on numeric attribute slice_thickness".into()
            }
        );
        assert!(matches!(parse_rules("[rule r]\n"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rules("[rule r]\nwhen = true\npriority = URGENT\n"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rules("[rule r]\nwhen = true\nmorph = set (0008,0080) SQ \"x\"\n"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rules("[rule r]\nwhen = true\nmorph = set (0028,0010) US \"big\"\n"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rules("[destination d]\nhost = h\nport = 0\ncalled_ae = X\n"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_rules("[widget w]\n"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn morph_values_with_quotes() {
        let rs = parse_rules("[rule r]\nwhen = true\nmorph = set (0008,0080) LO \"A \\\"B\\\" C\"\n").unwrap();
        assert_eq!(
            rs.rules[0].morphs[0],
            MorphOp::Set {
                tag: Tag::new(0x0008, 0x0080),
                vr: Vr::LO,
                value: "A \"B\" C".into()
            }
        );
        assert_eq!(parse_rules(&format_rules(&rs)).unwrap(), rs);
    }
}
