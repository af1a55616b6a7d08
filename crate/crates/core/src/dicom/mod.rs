//! In-memory DICOM data model and a round-trip-exact codec for Part 10
//! files and bare datasets in implicit/explicit VR little endian.

mod codec;
mod dataset;
mod dict;
mod element;
mod file;
mod tag;
mod vr;

pub use codec::{
    parse_dataset, parse_dataset_with_warnings, serialize_dataset, TransferSyntax, Warning,
    EXPLICIT_VR_LE, IMPLICIT_VR_LE,
};
pub use dataset::DataSet;
pub use dict::{dict_vr, keyword, known_tags};
pub use element::{format_ds, DataElement, Value};
pub use file::{parse_part10, serialize_part10, DicomFile, IMPLEMENTATION_CLASS_UID};
pub use tag::{tags, Tag};
pub use vr::Vr;

/// Well-known SOP class UIDs.
pub mod sop {
    pub const VERIFICATION: &str = "1.2.840.10008.1.1";
    pub const CT_IMAGE: &str = "1.2.840.10008.5.1.4.1.1.2";
    pub const MR_IMAGE: &str = "1.2.840.10008.5.1.4.1.1.4";
    pub const SECONDARY_CAPTURE: &str = "1.2.840.10008.5.1.4.1.1.7";
    pub const COMPREHENSIVE_SR: &str = "1.2.840.10008.5.1.4.1.1.88.33";
    pub const SEGMENTATION: &str = "1.2.840.10008.5.1.4.1.1.66.4";

    pub fn is_sr(uid: &str) -> bool {
        uid.starts_with("1.2.840.10008.5.1.4.1.1.88.")
    }

    pub fn is_secondary_capture(uid: &str) -> bool {
        uid == SECONDARY_CAPTURE || uid.starts_with("1.2.840.10008.5.1.4.1.1.7.")
    }

    pub fn is_rt(uid: &str) -> bool {
        uid.starts_with("1.2.840.10008.5.1.4.1.1.481.")
    }

    pub fn is_segmentation(uid: &str) -> bool {
        uid == SEGMENTATION
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no DICM magic at offset 128")]
    MissingMagic,
    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),
    #[error("truncated element{} at offset {offset}", tag.map(|t| format!(" {t}")).unwrap_or_default())]
    TruncatedElement { tag: Option<Tag>, offset: usize },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("type mismatch on {tag}: {message}")]
    TypeMismatch { tag: Tag, message: String },
    #[error("invalid tag {0:?}")]
    InvalidTag(String),
    #[error("unknown VR {0:?}")]
    UnknownVr(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
