//! Line-oriented section grammar shared by every config file:
//!
//! ```text
//! # comment
//! [kind name]
//! key = value
//! ```
//!
//! Values run to the end of the line. A `#` outside double quotes starts a
//! comment. Keys may repeat; consumers decide whether that is allowed.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ConfError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ConfError {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// 1-based column where the value starts.
    pub column: usize,
}

impl Entry {
    pub fn error(&self, message: impl Into<String>) -> ConfError {
        ConfError::new(self.line, self.column, message)
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T, ConfError>
    where
        T::Err: fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| self.error(format!("bad value for {}: {e}", self.key)))
    }

    pub fn bool(&self) -> Result<bool, ConfError> {
        match self.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.error(format!("expected true or false, got {other:?}"))),
        }
    }

    /// Comma-separated list, blanks dropped.
    pub fn list(&self) -> Vec<String> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub kind: String,
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn error(&self, message: impl Into<String>) -> ConfError {
        ConfError::new(self.line, 1, message)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    /// The single value for `key`; repeating it is an error.
    pub fn get<'a>(&'a self, key: &'a str) -> Result<Option<&'a Entry>, ConfError> {
        let mut it = self.all(key);
        let first = it.next();
        if let Some(dup) = it.next() {
            return Err(dup.error(format!("{key} given more than once")));
        }
        Ok(first)
    }

    pub fn require<'a>(&'a self, key: &'a str) -> Result<&'a Entry, ConfError> {
        self.get(key)?.ok_or_else(|| {
            let what = match &self.name {
                Some(n) => format!("[{} {}]", self.kind, n),
                None => format!("[{}]", self.kind),
            };
            self.error(format!("{what} is missing {key}"))
        })
    }

    /// Rejects keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), ConfError> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(ConfError::new(e.line, 1, format!("unknown key {:?} in [{}]", e.key, self.kind))),
            None => Ok(()),
        }
    }

    pub fn name_or_err(&self) -> Result<&str, ConfError> {
        self.name
            .as_deref()
            .ok_or_else(|| self.error(format!("[{}] needs a name", self.kind)))
    }
}

/// Strips a trailing comment, honouring double-quoted strings with
/// backslash escapes.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn parse_sections(text: &str) -> Result<Vec<Section>, ConfError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(inner) = rest.strip_suffix(']') else {
                return Err(ConfError::new(line_no, indent + 1, "unterminated section header"));
            };
            let mut parts = inner.split_whitespace();
            let kind = parts
                .next()
                .ok_or_else(|| ConfError::new(line_no, indent + 1, "empty section header"))?;
            let name = parts.next();
            if parts.next().is_some() {
                return Err(ConfError::new(line_no, indent + 1, "section header takes a kind and one name"));
            }
            if !is_ident(kind) || name.is_some_and(|n| !is_ident(n)) {
                return Err(ConfError::new(line_no, indent + 2, "bad section kind or name"));
            }
            sections.push(Section {
                kind: kind.to_string(),
                name: name.map(str::to_string),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfError::new(line_no, indent + 1, "expected key = value"));
        };
        let key = line[..eq].trim();
        if !is_ident(key) {
            return Err(ConfError::new(line_no, indent + 1, format!("bad key {key:?}")));
        }
        let after = &line[eq + 1..];
        let value = after.trim();
        let column = eq + 2 + (after.len() - after.trim_start().len());
        let Some(section) = sections.last_mut() else {
            return Err(ConfError::new(line_no, indent + 1, "entry before any section header"));
        };
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
            column,
        });
    }
    Ok(sections)
}

/// Quotes a string for a config value.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_entries() {
        let text = "# top\n[destination pacs]\nhost = 127.0.0.1  # trailing\nport=104\n\n[edge]\nfrom = a.out\n";
        let s = parse_sections(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].kind, "destination");
        assert_eq!(s[0].name.as_deref(), Some("pacs"));
        assert_eq!(s[0].get("host").unwrap().unwrap().value, "127.0.0.1");
        assert_eq!(s[0].get("port").unwrap().unwrap().parse::<u16>().unwrap(), 104);
        assert_eq!(s[1].name, None);
    }

    #[test]
    fn hash_inside_quotes_is_kept() {
        let s = parse_sections("[rule r]\nwhen = study_description ~ \"a#b\\\"#\" # c\n").unwrap();
        assert_eq!(s[0].entries[0].value, "study_description ~ \"a#b\\\"#\"");
    }

    #[test]
    fn value_column() {
        let s = parse_sections("[x]\nkey =  v\n").unwrap();
        assert_eq!(s[0].entries[0].column, 8);
    }

    #[test]
    fn errors_carry_position() {
        assert_eq!(parse_sections("key = v").unwrap_err().line, 1);
        assert_eq!(parse_sections("[a]\n\nnot an entry").unwrap_err().line, 3);
        assert!(parse_sections("[a b c]").is_err());
        assert!(parse_sections("[a").is_err());
    }

    #[test]
    fn repeated_key_rejected_by_get() {
        let s = parse_sections("[a]\nk = 1\nk = 2\n").unwrap();
        assert_eq!(s[0].all("k").count(), 2);
        assert_eq!(s[0].get("k").unwrap_err().line, 3);
    }

    #[test]
    fn quoting() {
        assert_eq!(quote(r#"a"b\c"#), r#""a\"b\\c""#);
    }
}
