//! Simulators standing in for the modality, PACS, viewer, AI receiver and
//! interface engine, plus the end-to-end scenario runner.

mod ai;
mod gen;
mod mllp_sink;
mod scenario;
mod send;
mod sink;

pub use ai::{AiReceiver, AiReceiverConfig, AiRun};
pub use gen::{gen_synthetic_study, synthetic_study, BrightBlock, SeriesSpec, SyntheticStudySpec};
pub use mllp_sink::{run_mllp_sink, AckMode, MllpSink};
pub use scenario::{parse_scenarios, run_scenario, Assertion, Scenario, ScenarioKind, ScenarioReport};
pub use send::{cli_modality_send, dicom_files_in, SendSummary};
pub use sink::{read_sink_manifest, run_store_sink, sha256_hex, SinkEntry, SinkScript, StoreSink, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvariantViolation(String),
    #[error("bind failed: {0}")]
    BindFailed(String),
    #[error(transparent)]
    Dicom(#[from] crate::dicom::Error),
    #[error(transparent)]
    Dimse(#[from] crate::dimse::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
