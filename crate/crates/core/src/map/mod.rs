//! Operator-DAG application runner: graph file parsing and validation,
//! the DICOM loading operators, a deterministic stub inference operator
//! and SR / secondary capture writers.

mod graph;
mod ops;
mod run;

use std::fmt;
use std::path::PathBuf;

use crate::conf::ConfError;
use crate::dicom::DataSet;
use crate::sr::{Detection, PatientInfo, StudyInfo};

pub use graph::{parse_graph, validate_dag, AppGraph, Edge, OperatorKind, OperatorSpec, Params, PortType, STANDARD_GRAPH};
pub use ops::{
    op_series_selector, op_series_to_volume, op_study_loader, op_stub_inference, op_write_sc, op_write_sr, LoadedStudies,
    PriorityMapping, DEFAULT_MIN_FRACTION, DEFAULT_SPACING_TOLERANCE, DEFAULT_THRESHOLD,
};
pub use run::{run_app, OpStatus, OperatorRecord, RunConfig, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("cycle through {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("input {operator}.{port} has no producer")]
    DanglingInput { operator: String, port: String },
    #[error("input {operator}.{port} has more than one producer")]
    DuplicateInput { operator: String, port: String },
    #[error("edge {from} -> {to}: {produced} does not fit {expected}")]
    PortTypeMismatch { from: String, to: String, produced: PortType, expected: PortType },
    #[error("edge endpoint {0} names no known operator port")]
    UnknownPort(String),
    #[error("operator {operator} failed: {cause}")]
    OperatorFailed { operator: String, cause: OpError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
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

/// Failure inside a single operator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpError {
    #[error("no studies found in {0}")]
    NoStudiesFound(PathBuf),
    #[error("no series matches the selection criteria")]
    NoMatchingSeries,
    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),
    #[error("non-uniform slice spacing: gap {gap} vs mean {mean}")]
    NonUniformSpacing { gap: f64, mean: f64 },
    #[error("unsupported pixel data: {0}")]
    UnsupportedPixelData(String),
    #[error("empty volume")]
    EmptyVolume,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("write failed: {0}")]
    WriteFailed(String),
}

/// Patient and study attributes shared by every series of a study.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StudyContext {
    pub study_uid: String,
    pub accession: String,
    pub patient: PatientInfo,
    pub study: StudyInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub series_uid: String,
    pub modality: String,
    pub description: String,
    pub slice_thickness: Option<f64>,
    /// Sorted by InstanceNumber, then SOP instance UID.
    pub instances: Vec<DataSet>,
    pub context: StudyContext,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub context: StudyContext,
    /// Sorted by series UID.
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    /// (nz, ny, nx)
    pub dims: (usize, usize, usize),
    /// (dz, dy, dx) in mm
    pub spacing: (f64, f64, f64),
    pub voxels: Vec<i16>,
    pub origin: [f64; 3],
    pub orientation: [f64; 6],
}

impl Volume {
    pub fn slice(&self, z: usize) -> &[i16] {
        let (_, ny, nx) = self.dims;
        &self.voxels[z * ny * nx..(z + 1) * ny * nx]
    }
}

/// Pixel rectangle with inclusive corners: column x0..=x1, row y0..=y1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl fmt::Display for PixelRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub detection: Detection,
    pub certainty: u8,
    /// On the mid-axial slice; absent for NEG.
    pub bbox: Option<PixelRect>,
    pub fraction: f64,
}
