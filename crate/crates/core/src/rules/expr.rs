//! Match expressions: predicates over instance attributes combined with
//! `and`, `or`, `not` and parentheses.

use std::fmt;

use regex::Regex;

use crate::conf::quote;
use crate::dicom::{tags, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Modality,
    StudyDescription,
    SeriesDescription,
    SliceThickness,
    SopClass,
    Accession,
    Source,
    Tag(Tag),
}

impl Selector {
    pub const KEYWORDS: [Selector; 7] = [
        Selector::Modality,
        Selector::StudyDescription,
        Selector::SeriesDescription,
        Selector::SliceThickness,
        Selector::SopClass,
        Selector::Accession,
        Selector::Source,
    ];

    pub fn from_keyword(s: &str) -> Option<Selector> {
        Self::KEYWORDS.into_iter().find(|k| k.keyword() == Some(s))
    }

    pub fn keyword(self) -> Option<&'static str> {
        Some(match self {
            Selector::Modality => "modality",
            Selector::StudyDescription => "study_description",
            Selector::SeriesDescription => "series_description",
            Selector::SliceThickness => "slice_thickness",
            Selector::SopClass => "sop_class",
            Selector::Accession => "accession",
            Selector::Source => "source",
            Selector::Tag(_) => return None,
        })
    }

    /// Dataset tag behind the selector; `None` for `source`.
    pub fn tag(self) -> Option<Tag> {
        Some(match self {
            Selector::Modality => tags::MODALITY,
            Selector::StudyDescription => tags::STUDY_DESCRIPTION,
            Selector::SeriesDescription => tags::SERIES_DESCRIPTION,
            Selector::SliceThickness => tags::SLICE_THICKNESS,
            Selector::SopClass => tags::SOP_CLASS_UID,
            Selector::Accession => tags::ACCESSION_NUMBER,
            Selector::Source => return None,
            Selector::Tag(t) => t,
        })
    }

    pub fn is_numeric(self) -> bool {
        self == Selector::SliceThickness
    }

    /// Explicit tags take their type from the literal.
    pub fn is_untyped(self) -> bool {
        matches!(self, Selector::Tag(_))
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Tag(t) => write!(f, "{t}"),
            other => f.write_str(other.keyword().expect("keyword selector")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Match,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 7] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Match, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Match => "~",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }
}

/// A compiled regular expression compared by its source text.
#[derive(Clone, Debug)]
pub struct Pattern {
    source: String,
    re: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self, regex::Error> {
        Ok(Pattern {
            source: source.to_string(),
            re: Regex::new(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn regex(&self) -> &Regex {
        &self.re
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
    Pattern(Pattern),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => f.write_str(&quote(s)),
            Literal::Pattern(p) => f.write_str(&quote(p.source())),
            Literal::Num(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub selector: Selector,
    pub op: CmpOp,
    pub literal: Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatchExpr {
    Const(bool),
    Pred(Predicate),
    Not(Box<MatchExpr>),
    /// At least two operands.
    And(Vec<MatchExpr>),
    Or(Vec<MatchExpr>),
}

impl MatchExpr {
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a MatchExpr, out: &mut Vec<&'a Predicate>) {
            match e {
                MatchExpr::Const(_) => {}
                MatchExpr::Pred(p) => out.push(p),
                MatchExpr::Not(x) => walk(x, out),
                MatchExpr::And(xs) | MatchExpr::Or(xs) => xs.iter().for_each(|x| walk(x, out)),
            }
        }
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for MatchExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(e: &MatchExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                MatchExpr::And(_) | MatchExpr::Or(_) => write!(f, "({e})"),
                _ => write!(f, "{e}"),
            }
        }
        match self {
            MatchExpr::Const(b) => write!(f, "{b}"),
            MatchExpr::Pred(p) => write!(f, "{} {} {}", p.selector, p.op.symbol(), p.literal),
            MatchExpr::Not(x) => {
                f.write_str("not ")?;
                operand(x, f)
            }
            MatchExpr::And(xs) | MatchExpr::Or(xs) => {
                let sep = if matches!(self, MatchExpr::And(_)) { " and " } else { " or " };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    operand(x, f)?;
                }
                Ok(())
            }
        }
    }
}

/// Parse failure with a 1-based column inside the expression text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Tag(Tag),
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let col = |i: usize| text[..chars.get(i).map_or(text.len(), |c| c.0)].chars().count() + 1;
    let err = |i: usize, m: &str| ExprError {
        column: col(i),
        message: m.to_string(),
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        let start = i;
        match c {
            _ if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => {
                let rest = &text[chars[i].0..];
                if let Some(tag) = rest.get(..11).and_then(|s| s.parse::<Tag>().ok()) {
                    out.push((col(start), Tok::Tag(tag)));
                    i += 11;
                } else {
                    out.push((col(start), Tok::LParen));
                    i += 1;
                }
                continue;
            }
            ')' => {
                out.push((col(start), Tok::RParen));
                i += 1;
                continue;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i).map(|c| c.1) {
                        None => return Err(err(start, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => {
                            match chars.get(i + 1).map(|c| c.1) {
                                Some(e @ ('"' | '\\')) => s.push(e),
                                // keep regex escapes such as \d intact
                                Some(other) => {
                                    s.push('\\');
                                    s.push(other);
                                }
                                None => return Err(err(start, "unterminated string")),
                            }
                            i += 2;
                        }
                        Some(other) => {
                            s.push(other);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push((col(start), Tok::Str(s)));
                continue;
            }
            '=' | '!' | '<' | '>' | '~' => {
                let next = chars.get(i + 1).map(|c| c.1);
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (CmpOp::Eq, 2),
                    ('!', Some('=')) => (CmpOp::Ne, 2),
                    ('<', Some('=')) => (CmpOp::Le, 2),
                    ('>', Some('=')) => (CmpOp::Ge, 2),
                    ('<', _) => (CmpOp::Lt, 1),
                    ('>', _) => (CmpOp::Gt, 1),
                    ('~', _) => (CmpOp::Match, 1),
                    _ => return Err(err(start, "unknown operator")),
                };
                out.push((col(start), Tok::Op(op)));
                i += len;
                continue;
            }
            _ if c == '-' || c.is_ascii_digit() => {
                i += 1;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                let end = chars.get(i).map_or(text.len(), |c| c.0);
                let s = &text[chars[start].0..end];
                let valid = {
                    let body = s.strip_prefix('-').unwrap_or(s);
                    let mut parts = body.splitn(2, '.');
                    let int = parts.next().unwrap_or("");
                    let frac = parts.next();
                    !int.is_empty()
                        && int.chars().all(|c| c.is_ascii_digit())
                        && frac.is_none_or(|f| !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()))
                };
                let n = s.parse::<f64>().ok().filter(|n| valid && n.is_finite());
                match n {
                    Some(n) => out.push((col(start), Tok::Num(n))),
                    None => return Err(err(start, &format!("bad number {s:?}"))),
                }
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map_or(text.len(), |c| c.0);
                out.push((col(start), Tok::Ident(text[chars[start].0..end].to_string())));
                continue;
            }
            _ => return Err(err(start, &format!("unexpected character {c:?}"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            column: self.col(),
            message: message.into(),
        })
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn or(&mut self) -> Result<MatchExpr, ExprError> {
        let mut xs = vec![self.and()?];
        while self.keyword("or") {
            self.pos += 1;
            xs.push(self.and()?);
        }
        Ok(if xs.len() == 1 { xs.pop().expect("one operand") } else { MatchExpr::Or(xs) })
    }

    fn and(&mut self) -> Result<MatchExpr, ExprError> {
        let mut xs = vec![self.unary()?];
        while self.keyword("and") {
            self.pos += 1;
            xs.push(self.unary()?);
        }
        Ok(if xs.len() == 1 { xs.pop().expect("one operand") } else { MatchExpr::And(xs) })
    }

    fn unary(&mut self) -> Result<MatchExpr, ExprError> {
        if self.keyword("not") {
            self.pos += 1;
            return Ok(MatchExpr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<MatchExpr, ExprError> {
        let selector = match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected )");
                }
                self.pos += 1;
                return Ok(e);
            }
            Some(Tok::Ident(s)) if s == "true" || s == "false" => {
                self.pos += 1;
                return Ok(MatchExpr::Const(s == "true"));
            }
            Some(Tok::Ident(s)) => match Selector::from_keyword(&s) {
                Some(sel) => sel,
                None => return self.err(format!("unknown attribute {s:?}")),
            },
            Some(Tok::Tag(t)) => Selector::Tag(t),
            Some(_) => return self.err("expected an attribute"),
            None => return self.err("unexpected end of expression"),
        };
        self.pos += 1;
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return self.err("expected a comparison operator"),
        };
        self.pos += 1;
        let lit_col = self.col();
        let literal = match self.peek().cloned() {
            Some(Tok::Str(s)) => Literal::Str(s),
            Some(Tok::Num(n)) => Literal::Num(n),
            _ => return self.err("expected a quoted string or a number"),
        };
        self.pos += 1;
        let fail = |m: &str| {
            Err(ExprError {
                column: lit_col,
                message: m.to_string(),
            })
        };
        let literal = match (op, literal) {
            (CmpOp::Match, _) if selector.is_numeric() => {
                return fail(&format!("~ cannot be used on numeric attribute {selector}"))
            }
            (CmpOp::Match, Literal::Str(s)) => match Pattern::new(&s) {
                Ok(p) => Literal::Pattern(p),
                Err(e) => return fail(&format!("bad regular expression: {e}")),
            },
            (CmpOp::Match, _) => return fail("~ needs a quoted regular expression"),
            (op, Literal::Str(_)) if op.is_ordering() => return fail("ordering operators need a number"),
            (_, Literal::Str(_)) if selector.is_numeric() => {
                return fail(&format!("{selector} is numeric and needs a number"))
            }
            (_, Literal::Num(_)) if !selector.is_numeric() && !selector.is_untyped() => {
                return fail(&format!("{selector} is text and needs a quoted string"))
            }
            (_, lit) => lit,
        };
        Ok(MatchExpr::Pred(Predicate {
            selector,
            op,
            literal,
        }))
    }
}

pub fn parse_expr(text: &str) -> Result<MatchExpr, ExprError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
    };
    let e = p.or()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(sel: Selector, op: CmpOp, lit: Literal) -> MatchExpr {
        MatchExpr::Pred(Predicate {
            selector: sel,
            op,
            literal: lit,
        })
    }

    #[test]
    fn precedence_and_flattening() {
        let e = parse_expr(r#"modality == "CT" or modality == "MR" and not source == "m2""#).unwrap();
        let MatchExpr::Or(xs) = e else { panic!() };
        assert_eq!(xs.len(), 2);
        assert!(matches!(&xs[1], MatchExpr::And(v) if v.len() == 2));
        let e = parse_expr("true and false and true").unwrap();
        assert!(matches!(e, MatchExpr::And(v) if v.len() == 3));
    }

    #[test]
    fn tag_selector_versus_parenthesis() {
        let e = parse_expr(r#"((0008,0080) == "CAII")"#).unwrap();
        assert_eq!(
            e,
            pred(
                Selector::Tag(Tag::new(0x0008, 0x0080)),
                CmpOp::Eq,
                Literal::Str("CAII".into())
            )
        );
        assert!(parse_expr("(0018,0050) >= 2").is_ok());
    }

    #[test]
    fn typing_rules() {
        assert!(parse_expr(r#"slice_thickness ~ "x""#).is_err());
        assert!(parse_expr(r#"slice_thickness == "2""#).is_err());
        assert!(parse_expr(r#"modality < "CT""#).is_err());
        assert!(parse_expr("modality == 3").is_err());
        assert!(parse_expr(r#"modality ~ 3"#).is_err());
        assert!(parse_expr(r#"modality ~ "(""#).is_err());
        assert!(parse_expr("slice_thickness >= 2.0").is_ok());
    }

    #[test]
    fn error_columns() {
        let e = parse_expr(r#"modality == "CT" and bogus == "x""#).unwrap_err();
        assert_eq!(e.column, 22);
        let e = parse_expr(r#"slice_thickness ~ "x""#).unwrap_err();
        assert_eq!(e.column, 19);
        assert!(parse_expr("").is_err());
        assert!(parse_expr("modality ==").is_err());
        assert!(parse_expr("1.").is_err());
    }

    #[test]
    fn escapes_in_strings() {
        let e = parse_expr(r#"study_description ~ "\d+ \"mm\"""#).unwrap();
        let MatchExpr::Pred(p) = &e else { panic!() };
        let Literal::Pattern(pat) = &p.literal else { panic!() };
        assert_eq!(pat.source(), r#"\d+ "mm""#);
        assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn display_reparses() {
        for src in [
            r#"not (modality == "CT" or modality == "MR")"#,
            r#"(a_x == 1) "#,
            "slice_thickness >= -0.625 and not not true",
            r#"source != "m2" and (sop_class == "1.2" or accession ~ "^A")"#,
        ] {
            let Ok(e) = parse_expr(src) else { continue };
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
