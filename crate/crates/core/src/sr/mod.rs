//! Structured reports carrying an AI finding: a measurement-report style
//! content tree, its parser, and template-driven field extraction.

mod build;
mod parse;
mod template;

use std::fmt;

use crate::rules::Priority;

pub use build::{build_tid1500_sr, closed_box};
pub use parse::{parse_sr_tree, read_finding, sr_context, SrContext};
pub use template::{extract_fields, parse_mapping_template, Extraction, MappingEntry, MappingTemplate, STANDARD_TEMPLATE};

/// Private coding scheme for the finding concepts.
pub const SCHEME: &str = "99FLOWGATE";

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a structured report (SOP class {0})")]
    NotAnSr(String),
    #[error("malformed content sequence: {0}")]
    MalformedContentSequence(String),
    #[error("invalid finding report: {0}")]
    InvariantViolation(String),
    #[error("template line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("template line {line}: duplicate target {field}")]
    DuplicateTarget { field: String, line: usize },
    #[error(transparent)]
    Dicom(#[from] crate::dicom::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Code {
    pub value: String,
    pub scheme: String,
    pub meaning: String,
}

impl Code {
    pub fn new(value: &str, scheme: &str, meaning: &str) -> Self {
        Code {
            value: value.to_string(),
            scheme: scheme.to_string(),
            meaning: meaning.to_string(),
        }
    }

    /// Same concept: value and scheme agree, meaning is ignored.
    pub fn same_concept(&self, other: &Code) -> bool {
        self.value == other.value && self.scheme == other.scheme
    }
}

pub mod concepts {
    use super::{Code, SCHEME};

    pub fn report() -> Code {
        Code::new("126000", "DCM", "Imaging Measurement Report")
    }
    pub fn priority() -> Code {
        Code::new("PRIORITY", SCHEME, "Priority")
    }
    pub fn detection() -> Code {
        Code::new("DETECTION", SCHEME, "Detection")
    }
    pub fn certainty() -> Code {
        Code::new("CERTAINTY", SCHEME, "Certainty")
    }
    pub fn bbox() -> Code {
        Code::new("BBOX", SCHEME, "Bounding box")
    }
    pub fn no_units() -> Code {
        Code::new("1", "UCUM", "no units")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relationship {
    Contains,
    HasProperties,
    InferredFrom,
}

impl Relationship {
    pub fn as_str(self) -> &'static str {
        match self {
            Relationship::Contains => "CONTAINS",
            Relationship::HasProperties => "HAS PROPERTIES",
            Relationship::InferredFrom => "INFERRED FROM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Relationship::Contains, Relationship::HasProperties, Relationship::InferredFrom]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Container,
    Code(Code),
    Text(String),
    Num { value: f64, unit: Code },
    Scoord { graphic_type: String, points: Vec<(f32, f32)> },
    /// A value type this crate does not interpret; kept, never extracted.
    Opaque { value_type: String },
}

impl Payload {
    pub fn value_type(&self) -> &str {
        match self {
            Payload::Container => "CONTAINER",
            Payload::Code(_) => "CODE",
            Payload::Text(_) => "TEXT",
            Payload::Num { .. } => "NUM",
            Payload::Scoord { .. } => "SCOORD",
            Payload::Opaque { value_type } => value_type,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrNode {
    pub concept: Option<Code>,
    /// `None` only for the root.
    pub relationship: Option<Relationship>,
    pub payload: Payload,
    pub children: Vec<SrNode>,
}

impl SrNode {
    pub fn leaf(relationship: Relationship, concept: Code, payload: Payload) -> Self {
        SrNode {
            concept: Some(concept),
            relationship: Some(relationship),
            payload,
            children: Vec::new(),
        }
    }

    /// Pre-order traversal in document order.
    pub fn walk(&self) -> Vec<&SrNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn find(&self, concept: &Code) -> Option<&SrNode> {
        self.walk()
            .into_iter()
            .find(|n| n.concept.as_ref().is_some_and(|c| c.same_concept(concept)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detection {
    Pos,
    Neg,
}

impl Detection {
    pub fn as_str(self) -> &'static str {
        match self {
            Detection::Pos => "POS",
            Detection::Neg => "NEG",
        }
    }
}

impl fmt::Display for Detection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Detection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "POS" => Ok(Detection::Pos),
            "NEG" => Ok(Detection::Neg),
            other => Err(format!("detection must be POS or NEG, got {other:?}")),
        }
    }
}

/// Pixel rectangle, `x0 < x1` and `y0 < y1`; edges lie on pixel
/// boundaries so a single pixel at column c spans `c..c+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatientInfo {
    pub id: String,
    pub family: String,
    pub given: String,
    pub birth_date: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StudyInfo {
    pub date: String,
    pub code: String,
    pub description: String,
    pub short_description: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FindingReport {
    pub priority: Priority,
    pub detection: Detection,
    pub certainty: u8,
    pub bbox: Option<BBox>,
    pub evaluation_type: String,
    pub accession: String,
    pub study_uid: String,
    pub patient: PatientInfo,
    pub study: StudyInfo,
}

impl FindingReport {
    pub fn validate(&self) -> Result<(), Error> {
        if self.certainty > 10 {
            return Err(Error::InvariantViolation(format!("certainty {} above 10", self.certainty)));
        }
        match (self.detection, self.bbox) {
            (Detection::Neg, Some(_)) => Err(Error::InvariantViolation("NEG finding with a bounding box".into())),
            (_, Some(b)) if b.x0 >= b.x1 || b.y0 >= b.y1 => {
                Err(Error::InvariantViolation(format!("degenerate bounding box {b:?}")))
            }
            _ if self.study_uid.is_empty() => Err(Error::InvariantViolation("empty study UID".into())),
            _ => Ok(()),
        }
    }
}
