//! HL7 v2 message model, encoding with escapes, the ORM^O01 priority
//! message builder and MLLP transport.

mod codec;
mod mllp;
mod orm;

pub use codec::{escape, parse_message, unescape};
pub use mllp::{mllp_frame, mllp_send, mllp_unframe, read_frame, AckCode, FRAME_END, FRAME_START};
pub use orm::{build_ack, build_orm_o01, Layout, OrderInfo, OrmContext, PatientIdent};

use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not an HL7 v2 message (must start with MSH)")]
    NotHl7,
    #[error("bad delimiter definition in MSH")]
    BadDelimiters,
    #[error("invalid message: {0}")]
    InvariantViolation(String),
    #[error("bad MLLP frame: {0}")]
    BadFrame(String),
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("no acknowledgement within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delimiters {
    pub field: char,
    pub component: char,
    pub repetition: char,
    pub escape: char,
    pub subcomponent: char,
}

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters {
            field: '|',
            component: '^',
            repetition: '~',
            escape: '\\',
            subcomponent: '&',
        }
    }
}

impl Delimiters {
    /// MSH-2 text.
    pub fn encoding_characters(&self) -> String {
        [self.component, self.repetition, self.escape, self.subcomponent]
            .iter()
            .collect()
    }

    fn distinct(&self) -> bool {
        let all = [self.field, self.component, self.repetition, self.escape, self.subcomponent];
        all.iter().enumerate().all(|(i, a)| all[i + 1..].iter().all(|b| a != b))
            && all.iter().all(|c| !c.is_alphanumeric() && !c.is_whitespace())
    }
}

/// A field: repetitions of components, each component a list of
/// subcomponents. The empty field is one repetition of one empty value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field(pub Vec<Vec<Vec<String>>>);

impl Field {
    pub fn empty() -> Self {
        Field::text("")
    }

    pub fn text(s: &str) -> Self {
        Field(vec![vec![vec![s.to_string()]]])
    }

    pub fn components<S: AsRef<str>>(parts: &[S]) -> Self {
        Field(vec![parts.iter().map(|p| vec![p.as_ref().to_string()]).collect()])
    }

    pub fn is_empty(&self) -> bool {
        matches!(&self.0[..], [rep] if matches!(&rep[..], [comp] if matches!(&comp[..], [s] if s.is_empty())))
    }

    /// Component `n` (1-based) of the first repetition, first subcomponent.
    pub fn component(&self, n: usize) -> Option<&str> {
        self.0.first()?.get(n.checked_sub(1)?)?.first().map(String::as_str)
    }

    /// The field's value with delimiters re-inserted and no escaping, for
    /// display and comparisons.
    pub fn display(&self, d: &Delimiters) -> String {
        self.0
            .iter()
            .map(|rep| {
                rep.iter()
                    .map(|c| c.join(&d.subcomponent.to_string()))
                    .collect::<Vec<_>>()
                    .join(&d.component.to_string())
            })
            .collect::<Vec<_>>()
            .join(&d.repetition.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub id: String,
    /// `fields[0]` is field 1. For MSH, fields 1 and 2 hold the field
    /// separator and encoding characters verbatim.
    pub fields: Vec<Field>,
}

impl Segment {
    pub fn new(id: &str, fields: Vec<Field>) -> Self {
        Segment {
            id: id.to_string(),
            fields,
        }
    }

    /// Field `n`, 1-based.
    pub fn field(&self, n: usize) -> Option<&Field> {
        self.fields.get(n.checked_sub(1)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hl7Message {
    pub delimiters: Delimiters,
    pub segments: Vec<Segment>,
}

impl Hl7Message {
    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn segments_named<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Segment> + 'a {
        self.segments.iter().filter(move |s| s.id == id)
    }

    /// Text of field `n` in the first segment `id`, delimiters shown raw.
    pub fn value(&self, id: &str, n: usize) -> Option<String> {
        self.segment(id)?.field(n).map(|f| f.display(&self.delimiters))
    }

    pub fn encode(&self) -> Result<Vec<u8>, Error> {
        codec::encode_message(self)
    }
}
