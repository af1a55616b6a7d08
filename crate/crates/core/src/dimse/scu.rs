//! Storage service class user.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::dicom::{serialize_dataset, DicomFile, EXPLICIT_VR_LE, IMPLICIT_VR_LE};

use super::assoc::{AcceptedContext, Association, AssociationMeta, Incoming};
use super::command::{self, status, Command};
use super::pdu::{
    encode_pdu, read_pdu, AssociateRq, ContextResult, Pdu, PresentationContextRq, UserInfo,
    APPLICATION_CONTEXT, PROTOCOL_VERSION,
};
use super::{AeTitle, Error};

#[derive(Clone, Debug)]
pub struct ScuOptions {
    /// Our receive limit, advertised to the peer.
    pub max_pdu_length: u32,
    pub connect_timeout: Duration,
    /// Read timeout for every response.
    pub response_timeout: Duration,
    /// Stop sending further files after the first non-success status.
    pub stop_on_failure: bool,
}

impl Default for ScuOptions {
    fn default() -> Self {
        ScuOptions {
            max_pdu_length: super::DEFAULT_MAX_PDU,
            connect_timeout: Duration::from_secs(10),
            response_timeout: Duration::from_secs(30),
            stop_on_failure: false,
        }
    }
}

fn resolve(endpoint: &str) -> Result<SocketAddr, Error> {
    endpoint
        .to_socket_addrs()
        .map_err(|e| Error::ConnectionRefused(format!("{endpoint}: {e}")))?
        .next()
        .ok_or_else(|| Error::ConnectionRefused(format!("{endpoint}: no address")))
}

/// Opens an association proposing one context per abstract syntax, each
/// offering `preferred` first and then the other little endian syntax.
pub fn associate(
    endpoint: &str,
    calling: &AeTitle,
    called: &AeTitle,
    proposals: &[(String, String)],
    opts: &ScuOptions,
) -> Result<Association, Error> {
    let addr = resolve(endpoint)?;
    let stream = TcpStream::connect_timeout(&addr, opts.connect_timeout).map_err(|e| match e.kind() {
        ErrorKind::ConnectionRefused | ErrorKind::TimedOut | ErrorKind::AddrNotAvailable => {
            Error::ConnectionRefused(format!("{endpoint}: {e}"))
        }
        _ => Error::Io(e),
    })?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(opts.response_timeout))?;

    if proposals.len() > 128 {
        return Err(Error::Protocol("more than 128 presentation contexts".into()));
    }
    let contexts: Vec<PresentationContextRq> = proposals
        .iter()
        .enumerate()
        .map(|(i, (abs, preferred))| {
            let other = if preferred == EXPLICIT_VR_LE { IMPLICIT_VR_LE } else { EXPLICIT_VR_LE };
            PresentationContextRq {
                id: (2 * i + 1) as u8,
                abstract_syntax: abs.clone(),
                transfer_syntaxes: vec![preferred.clone(), other.to_string()],
            }
        })
        .collect();
    let rq = AssociateRq {
        protocol_version: PROTOCOL_VERSION,
        called: called.clone(),
        calling: calling.clone(),
        application_context: APPLICATION_CONTEXT.to_string(),
        contexts: contexts.clone(),
        user_info: UserInfo {
            max_pdu_length: opts.max_pdu_length,
            ..UserInfo::default()
        },
    };
    let mut s = stream;
    std::io::Write::write_all(&mut s, &encode_pdu(&Pdu::AssociateRq(rq))?)?;
    let reply = read_pdu(&mut s, 1 << 20).map_err(|e| match e {
        Error::Io(io) if io.kind() == ErrorKind::UnexpectedEof => Error::PeerAbort,
        other => other.into_timeout(),
    })?;
    let ac = match reply {
        Pdu::AssociateAc(ac) => ac,
        Pdu::AssociateRj(rj) => return Err(Error::AssociationRejected(rj)),
        Pdu::Abort(_) => return Err(Error::PeerAbort),
        other => {
            return Err(Error::Protocol(format!(
                "expected A-ASSOCIATE-AC, got type {:#04x}",
                other.type_code()
            )))
        }
    };
    let accepted: Vec<AcceptedContext> = ac
        .contexts
        .iter()
        .filter(|c| c.result == ContextResult::Acceptance)
        .filter_map(|c| {
            contexts.iter().find(|p| p.id == c.id).map(|p| AcceptedContext {
                id: c.id,
                abstract_syntax: p.abstract_syntax.clone(),
                transfer_syntax: c.transfer_syntax.clone(),
            })
        })
        .collect();
    let meta = AssociationMeta {
        calling: calling.clone(),
        called: called.clone(),
        peer_addr: addr,
    };
    Association::new(s, meta, ac.user_info.max_pdu_length, opts.max_pdu_length, accepted)
}

fn expect_response(assoc: &mut Association, expected_field: u16, message_id: u16) -> Result<Command, Error> {
    match assoc.recv_message()? {
        Incoming::Message(m) => {
            if m.command.command_field != expected_field || m.command.message_id != message_id {
                return Err(Error::Protocol(format!(
                    "unexpected response {:#06x} to message {message_id}",
                    m.command.command_field
                )));
            }
            Ok(m.command)
        }
        Incoming::Aborted(_) => Err(Error::PeerAbort),
        Incoming::ReleaseRequested => Err(Error::Protocol("peer requested release mid-exchange".into())),
    }
}

/// Stores `files` over a single association and releases it. Returns one
/// status per file sent; a failing status does not stop the remaining
/// files unless `opts.stop_on_failure` is set.
pub fn scu_store(
    endpoint: &str,
    calling: &AeTitle,
    called: &AeTitle,
    files: &[DicomFile],
    opts: &ScuOptions,
) -> Result<Vec<u16>, Error> {
    let mut proposals: Vec<(String, String)> = Vec::new();
    for f in files {
        let class = f
            .sop_class_uid()
            .ok_or_else(|| Error::Protocol("file without SOP class UID".into()))?
            .to_string();
        if !proposals.iter().any(|(c, _)| *c == class) {
            proposals.push((class, f.transfer_syntax.clone()));
        }
    }
    let mut assoc = associate(endpoint, calling, called, &proposals, opts)?;
    let mut statuses = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let class = f.sop_class_uid().unwrap_or_default();
        let instance = f.sop_instance_uid().unwrap_or_default();
        let Some(ctx) = assoc.context_for(class).cloned() else {
            assoc.abort();
            return Err(Error::NoPresentationContext(class.to_string()));
        };
        let message_id = (i as u16).wrapping_add(1);
        let data = serialize_dataset(&f.dataset, &ctx.transfer_syntax)?;
        let cmd = command::c_store_rq(message_id, class, instance)?;
        assoc.send_message(ctx.id, &cmd, Some(&data))?;
        let rsp = expect_response(&mut assoc, command::C_STORE_RSP, message_id)?;
        let st = rsp.status.unwrap_or(status::CANNOT_UNDERSTAND);
        statuses.push(st);
        if opts.stop_on_failure && !status::is_success(st) {
            break;
        }
    }
    assoc.release()?;
    Ok(statuses)
}

/// C-ECHO round trip.
pub fn scu_echo(endpoint: &str, calling: &AeTitle, called: &AeTitle, opts: &ScuOptions) -> Result<u16, Error> {
    let verification = crate::dicom::sop::VERIFICATION.to_string();
    let mut assoc = associate(endpoint, calling, called, &[(verification.clone(), IMPLICIT_VR_LE.to_string())], opts)?;
    let ctx = assoc
        .context_for(&verification)
        .cloned()
        .ok_or(Error::NoPresentationContext(verification))?;
    assoc.send_message(ctx.id, &command::c_echo_rq(1)?, None)?;
    let rsp = expect_response(&mut assoc, command::C_ECHO_RSP, 1)?;
    assoc.release()?;
    Ok(rsp.status.unwrap_or(status::CANNOT_UNDERSTAND))
}
