//! A reduced DICOM upper layer: association negotiation, C-STORE as SCU
//! and SCP, C-ECHO, orderly release and abort over TCP.
//!
//! One outstanding request per association; command sets always travel in
//! implicit VR little endian.

mod ae;
mod assoc;
mod command;
mod pdu;
mod scp;
mod scu;

use std::time::Duration;

pub use ae::AeTitle;
pub use assoc::{
    negotiate_accept, AcceptPolicy, AcceptedContext, Association, AssociationMeta, AssociationState,
    CallingFilter, Incoming, Message, Negotiation,
};
pub use command::{status, CStoreExchange, Command, C_ECHO_RQ, C_ECHO_RSP, C_STORE_RQ, C_STORE_RSP};
pub use pdu::{
    decode_pdu, encode_pdu, read_pdu, Abort, AssociateAc, AssociateRj, AssociateRq, ContextResult, Pdu,
    Pdv, PresentationContextAc, PresentationContextRq, UserInfo, APPLICATION_CONTEXT, PROTOCOL_VERSION,
};
pub use scp::{scp_serve, ScpConfig, ScpHandle, StoreHandler};
pub use scu::{associate, scu_echo, scu_store, ScuOptions};

pub const DEFAULT_MAX_PDU: u32 = 16384;
/// A peer max PDU of 0 ("unlimited") is treated as this.
pub const MAX_PDU_CAP: u32 = 1 << 20;
pub const IDLE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown PDU type {0:#04x}")]
    UnknownPduType(u8),
    #[error("PDU length mismatch (declared {declared:?}, have {actual})")]
    LengthMismatch { declared: Option<usize>, actual: usize },
    #[error("PDU too large ({0} bytes)")]
    OversizedPdu(u64),
    #[error("malformed PDU: {0}")]
    Malformed(String),
    #[error("invalid AE title {0:?}")]
    InvalidAeTitle(String),
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("association rejected (result {}, source {}, reason {})", .0.result, .0.source, .0.reason)]
    AssociationRejected(AssociateRj),
    #[error("peer aborted the association")]
    PeerAbort,
    #[error("no accepted presentation context for {0}")]
    NoPresentationContext(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("cannot bind {0}")]
    BindFailed(String),
    #[error(transparent)]
    Dicom(#[from] crate::dicom::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn into_timeout(self) -> Self {
        match self {
            Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Error::Timeout
            }
            other => other,
        }
    }
}
