//! Association negotiation and the established-association message layer.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use super::command::Command;
use super::pdu::{
    encode_pdu, read_pdu, Abort, AssociateAc, AssociateRj, AssociateRq, ContextResult, Pdu, Pdv,
    PresentationContextAc, UserInfo, APPLICATION_CONTEXT, PROTOCOL_VERSION,
};
use super::{AeTitle, Error, MAX_PDU_CAP};

/// Any PDU during negotiation must fit in this many bytes.
const NEGOTIATION_PDU_LIMIT: usize = 1 << 20;

pub type CallingFilter = Arc<dyn Fn(&AeTitle) -> bool + Send + Sync>;

/// Acceptor-side policy for incoming association requests.
#[derive(Clone)]
pub struct AcceptPolicy {
    /// Called AE titles served here. Empty means any.
    pub ae_titles: Vec<AeTitle>,
    /// Accepted abstract syntaxes; `None` accepts any.
    pub abstract_syntaxes: Option<Vec<String>>,
    pub transfer_syntaxes: Vec<String>,
    pub max_pdu_length: u32,
    pub calling_filter: Option<CallingFilter>,
}

impl fmt::Debug for AcceptPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AcceptPolicy")
            .field("ae_titles", &self.ae_titles)
            .field("abstract_syntaxes", &self.abstract_syntaxes)
            .field("transfer_syntaxes", &self.transfer_syntaxes)
            .field("max_pdu_length", &self.max_pdu_length)
            .field("calling_filter", &self.calling_filter.is_some())
            .finish()
    }
}

impl Default for AcceptPolicy {
    fn default() -> Self {
        AcceptPolicy {
            ae_titles: Vec::new(),
            abstract_syntaxes: None,
            transfer_syntaxes: vec![
                crate::dicom::EXPLICIT_VR_LE.to_string(),
                crate::dicom::IMPLICIT_VR_LE.to_string(),
            ],
            max_pdu_length: super::DEFAULT_MAX_PDU,
            calling_filter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Negotiation {
    Accept(AssociateAc),
    Reject(AssociateRj),
}

/// Decides the response to an A-ASSOCIATE-RQ. Each proposed context gets
/// the first of its proposed transfer syntaxes that the policy supports.
pub fn negotiate_accept(rq: &AssociateRq, policy: &AcceptPolicy) -> Negotiation {
    if rq.application_context != APPLICATION_CONTEXT {
        return Negotiation::Reject(AssociateRj::APPLICATION_CONTEXT_NOT_SUPPORTED);
    }
    if !policy.ae_titles.is_empty() && !policy.ae_titles.contains(&rq.called) {
        return Negotiation::Reject(AssociateRj::CALLED_AE_NOT_RECOGNIZED);
    }
    if let Some(filter) = &policy.calling_filter {
        if !filter(&rq.calling) {
            return Negotiation::Reject(AssociateRj::CALLING_AE_NOT_RECOGNIZED);
        }
    }
    let mut seen = HashSet::new();
    let contexts = rq
        .contexts
        .iter()
        .map(|pc| {
            let reject = |result| PresentationContextAc {
                id: pc.id,
                result,
                transfer_syntax: String::new(),
            };
            if pc.id % 2 == 0 || !seen.insert(pc.id) {
                return reject(ContextResult::NoReason);
            }
            let abstract_ok = pc.abstract_syntax == crate::dicom::sop::VERIFICATION
                || policy
                    .abstract_syntaxes
                    .as_ref()
                    .is_none_or(|list| list.contains(&pc.abstract_syntax));
            if !abstract_ok {
                return reject(ContextResult::AbstractSyntaxNotSupported);
            }
            match pc
                .transfer_syntaxes
                .iter()
                .find(|ts| policy.transfer_syntaxes.contains(ts))
            {
                Some(ts) => PresentationContextAc {
                    id: pc.id,
                    result: ContextResult::Acceptance,
                    transfer_syntax: ts.clone(),
                },
                None => reject(ContextResult::TransferSyntaxesNotSupported),
            }
        })
        .collect();
    Negotiation::Accept(AssociateAc {
        protocol_version: PROTOCOL_VERSION,
        called: rq.called.clone(),
        calling: rq.calling.clone(),
        application_context: APPLICATION_CONTEXT.to_string(),
        contexts,
        user_info: UserInfo {
            max_pdu_length: policy.max_pdu_length,
            ..UserInfo::default()
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssociationState {
    Negotiating,
    Established,
    Releasing,
    Closed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcceptedContext {
    pub id: u8,
    pub abstract_syntax: String,
    pub transfer_syntax: String,
}

/// Metadata about an established association, handed to SCP handlers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociationMeta {
    pub calling: AeTitle,
    pub called: AeTitle,
    pub peer_addr: SocketAddr,
}

/// A complete DIMSE message: command plus optional dataset bytes.
#[derive(Clone, Debug)]
pub struct Message {
    pub context_id: u8,
    pub command: Command,
    pub data: Option<Vec<u8>>,
}

#[derive(Debug)]
pub enum Incoming {
    Message(Message),
    ReleaseRequested,
    Aborted(Abort),
}

pub(crate) fn effective_max(v: u32) -> u32 {
    if v == 0 {
        MAX_PDU_CAP
    } else {
        v.min(MAX_PDU_CAP)
    }
}

pub struct Association {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    pub meta: AssociationMeta,
    /// Largest P-DATA-TF body the peer accepts.
    pub peer_max_pdu: u32,
    pub local_max_pdu: u32,
    pub contexts: Vec<AcceptedContext>,
    state: AssociationState,
}

impl Association {
    pub(crate) fn new(
        stream: TcpStream,
        meta: AssociationMeta,
        peer_max_pdu: u32,
        local_max_pdu: u32,
        contexts: Vec<AcceptedContext>,
    ) -> Result<Self, Error> {
        let writer = stream.try_clone()?;
        Ok(Association {
            reader: BufReader::new(stream),
            writer,
            meta,
            peer_max_pdu: effective_max(peer_max_pdu),
            local_max_pdu: effective_max(local_max_pdu),
            contexts,
            state: AssociationState::Established,
        })
    }

    pub fn state(&self) -> AssociationState {
        self.state
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> Result<(), Error> {
        self.writer.set_read_timeout(t)?;
        Ok(())
    }

    pub fn context(&self, id: u8) -> Option<&AcceptedContext> {
        self.contexts.iter().find(|c| c.id == id)
    }

    pub fn context_for(&self, abstract_syntax: &str) -> Option<&AcceptedContext> {
        self.contexts.iter().find(|c| c.abstract_syntax == abstract_syntax)
    }

    pub fn send_pdu(&mut self, pdu: &Pdu) -> Result<(), Error> {
        let bytes = encode_pdu(pdu)?;
        self.writer.write_all(&bytes)?;
        Ok(())
    }

    pub fn recv_pdu(&mut self) -> Result<Pdu, Error> {
        // P-DATA bodies may carry several PDVs; allow headroom over our max
        let limit = (self.local_max_pdu as usize).max(NEGOTIATION_PDU_LIMIT / 16) + 64;
        read_pdu(&mut self.reader, limit).map_err(|e| e.into_timeout())
    }

    /// Sends a command and optional dataset, fragmented to the peer's
    /// maximum PDU length.
    pub fn send_message(&mut self, context_id: u8, command: &[u8], data: Option<&[u8]>) -> Result<(), Error> {
        let chunk = (self.peer_max_pdu as usize).saturating_sub(6).max(1);
        let mut out = Vec::new();
        let push = |bytes: &[u8], is_command: bool, out: &mut Vec<u8>| -> Result<(), Error> {
            let mut pieces = bytes.chunks(chunk).peekable();
            if pieces.peek().is_none() {
                out.extend(encode_pdu(&Pdu::DataTf(vec![Pdv {
                    context_id,
                    is_command,
                    is_last: true,
                    data: Vec::new(),
                }]))?);
            }
            while let Some(p) = pieces.next() {
                out.extend(encode_pdu(&Pdu::DataTf(vec![Pdv {
                    context_id,
                    is_command,
                    is_last: pieces.peek().is_none(),
                    data: p.to_vec(),
                }]))?);
            }
            Ok(())
        };
        push(command, true, &mut out)?;
        if let Some(d) = data {
            push(d, false, &mut out)?;
        }
        self.writer.write_all(&out)?;
        Ok(())
    }

    /// Receives the next message, reassembling P-DATA fragments.
    pub fn recv_message(&mut self) -> Result<Incoming, Error> {
        let mut command_bytes = Vec::new();
        let mut command: Option<Command> = None;
        let mut data = Vec::new();
        let mut context_id = None;
        loop {
            match self.recv_pdu()? {
                Pdu::DataTf(pdvs) => {
                    for pdv in pdvs {
                        if self.context(pdv.context_id).is_none() {
                            return Err(Error::Protocol(format!(
                                "PDV on unaccepted presentation context {}",
                                pdv.context_id
                            )));
                        }
                        if *context_id.get_or_insert(pdv.context_id) != pdv.context_id {
                            return Err(Error::Protocol("presentation context changed mid-message".into()));
                        }
                        if pdv.is_command {
                            if command.is_some() {
                                return Err(Error::Protocol("command fragment after command end".into()));
                            }
                            command_bytes.extend_from_slice(&pdv.data);
                            if pdv.is_last {
                                let c = Command::parse(&command_bytes)?;
                                if !c.has_data_set {
                                    return Ok(Incoming::Message(Message {
                                        context_id: pdv.context_id,
                                        command: c,
                                        data: None,
                                    }));
                                }
                                command = Some(c);
                            }
                        } else {
                            let Some(c) = &command else {
                                return Err(Error::Protocol("dataset fragment before command".into()));
                            };
                            data.extend_from_slice(&pdv.data);
                            if pdv.is_last {
                                return Ok(Incoming::Message(Message {
                                    context_id: pdv.context_id,
                                    command: c.clone(),
                                    data: Some(std::mem::take(&mut data)),
                                }));
                            }
                        }
                    }
                }
                Pdu::ReleaseRq => return Ok(Incoming::ReleaseRequested),
                Pdu::Abort(a) => {
                    self.state = AssociationState::Aborted;
                    return Ok(Incoming::Aborted(a));
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "unexpected PDU type {:#04x} on established association",
                        other.type_code()
                    )))
                }
            }
        }
    }

    /// Requestor-side orderly release.
    pub fn release(mut self) -> Result<(), Error> {
        self.state = AssociationState::Releasing;
        self.send_pdu(&Pdu::ReleaseRq)?;
        loop {
            match self.recv_pdu()? {
                Pdu::ReleaseRp => break,
                Pdu::Abort(_) => return Err(Error::PeerAbort),
                Pdu::DataTf(_) => continue,
                other => {
                    return Err(Error::Protocol(format!(
                        "expected A-RELEASE-RP, got type {:#04x}",
                        other.type_code()
                    )))
                }
            }
        }
        self.state = AssociationState::Closed;
        let _ = self.writer.shutdown(Shutdown::Both);
        Ok(())
    }

    /// Acceptor-side answer to a release request.
    pub fn confirm_release(&mut self) -> Result<(), Error> {
        self.send_pdu(&Pdu::ReleaseRp)?;
        self.state = AssociationState::Closed;
        let _ = self.writer.flush();
        Ok(())
    }

    pub fn abort(&mut self) {
        let _ = self.send_pdu(&Pdu::Abort(Abort { source: 0, reason: 0 }));
        self.state = AssociationState::Aborted;
        let _ = self.writer.shutdown(Shutdown::Both);
    }
}
