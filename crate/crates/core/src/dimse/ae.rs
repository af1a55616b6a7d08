use std::fmt;
use std::str::FromStr;

use super::Error;

/// Application Entity title: 1–16 characters from `A-Z 0-9 space _ -`,
/// encoded on the wire as exactly 16 space-padded bytes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AeTitle(String);

impl AeTitle {
    pub fn new(s: &str) -> Result<Self, Error> {
        let t = s.trim_matches([' ', '\0']);
        let ok_char = |c: char| c.is_ascii_uppercase() || c.is_ascii_digit() || matches!(c, ' ' | '_' | '-');
        if t.is_empty() || t.len() > 16 || !t.chars().all(ok_char) {
            return Err(Error::InvalidAeTitle(s.to_string()));
        }
        Ok(AeTitle(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [b' '; 16];
        out[..self.0.len()].copy_from_slice(self.0.as_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, Error> {
        let s = std::str::from_utf8(b).map_err(|_| Error::InvalidAeTitle(format!("{b:?}")))?;
        Self::new(s)
    }
}

impl FromStr for AeTitle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for AeTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AeTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AeTitle({:?})", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AeTitle::new("PACS").is_ok());
        assert!(AeTitle::new("AI_RECEIVER-01").is_ok());
        assert!(AeTitle::new("").is_err());
        assert!(AeTitle::new("    ").is_err());
        assert!(AeTitle::new("lowercase").is_err());
        assert!(AeTitle::new("SEVENTEEN_CHARS_X").is_err());
    }

    #[test]
    fn wire_form_is_16_bytes() {
        let ae = AeTitle::new("PACS").unwrap();
        assert_eq!(&ae.to_bytes(), b"PACS            ");
        assert_eq!(AeTitle::from_bytes(&ae.to_bytes()).unwrap(), ae);
    }
}
