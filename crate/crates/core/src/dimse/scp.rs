//! Storage service class provider: one thread per association.

use std::collections::HashMap;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::dicom::{parse_dataset, tags, DicomFile, Vr};

use super::assoc::{negotiate_accept, AcceptPolicy, AcceptedContext, Association, AssociationMeta, Incoming, Negotiation};
use super::command::{self, status};
use super::pdu::{encode_pdu, read_pdu, Abort, ContextResult, Pdu};
use super::{AeTitle, Error};

/// Receives each stored object and decides its DIMSE status. Called
/// concurrently from every association thread.
pub trait StoreHandler: Send + Sync {
    fn handle_store(&self, meta: &AssociationMeta, file: DicomFile) -> u16;
}

impl<F> StoreHandler for F
where
    F: Fn(&AssociationMeta, DicomFile) -> u16 + Send + Sync,
{
    fn handle_store(&self, meta: &AssociationMeta, file: DicomFile) -> u16 {
        self(meta, file)
    }
}

#[derive(Clone, Debug)]
pub struct ScpConfig {
    pub bind: String,
    pub policy: AcceptPolicy,
    pub idle_timeout: Duration,
}

impl ScpConfig {
    pub fn new(bind: impl Into<String>, ae_title: AeTitle) -> Self {
        ScpConfig {
            bind: bind.into(),
            policy: AcceptPolicy {
                ae_titles: vec![ae_title],
                ..AcceptPolicy::default()
            },
            idle_timeout: super::IDLE_TIMEOUT,
        }
    }
}

type Connections = Arc<Mutex<HashMap<u64, TcpStream>>>;

/// Handle to a running SCP. Dropping it stops the listener and closes
/// any open associations.
pub struct ScpHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    conns: Connections,
}

impl ScpHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
        for (_, s) in self.conns.lock().expect("connection table poisoned").drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ScpHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

pub fn scp_serve(config: ScpConfig, handler: Arc<dyn StoreHandler>) -> Result<ScpHandle, Error> {
    let listener = TcpListener::bind(&config.bind).map_err(|e| Error::BindFailed(format!("{}: {e}", config.bind)))?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Connections = Arc::default();
    let next_id = AtomicU64::new(0);

    let accept_thread = {
        let stop = stop.clone();
        let conns = conns.clone();
        std::thread::Builder::new()
            .name(format!("scp-accept-{}", addr.port()))
            .spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let id = next_id.fetch_add(1, Ordering::Relaxed);
                    if let Ok(clone) = stream.try_clone() {
                        conns.lock().expect("connection table poisoned").insert(id, clone);
                    }
                    let policy = config.policy.clone();
                    let idle = config.idle_timeout;
                    let handler = handler.clone();
                    let conns = conns.clone();
                    let spawned = std::thread::Builder::new()
                        .name(format!("scp-assoc-{id}"))
                        .spawn(move || {
                            if let Err(e) = serve_association(stream, &policy, idle, handler.as_ref()) {
                                log::debug!("association {id} ended with error: {e}");
                            }
                            conns.lock().expect("connection table poisoned").remove(&id);
                        });
                    if let Err(e) = spawned {
                        log::error!("cannot spawn association thread: {e}");
                    }
                }
            })?
    };
    Ok(ScpHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
        conns,
    })
}

fn send_abort(stream: &mut TcpStream) {
    if let Ok(b) = encode_pdu(&Pdu::Abort(Abort { source: 2, reason: 0 })) {
        let _ = std::io::Write::write_all(stream, &b);
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn serve_association(
    mut stream: TcpStream,
    policy: &AcceptPolicy,
    idle: Duration,
    handler: &dyn StoreHandler,
) -> Result<(), Error> {
    stream.set_read_timeout(Some(idle))?;
    stream.set_nodelay(true)?;
    let peer_addr = stream.peer_addr()?;
    let rq = match read_pdu(&mut stream, 1 << 20) {
        Ok(Pdu::AssociateRq(rq)) => rq,
        Ok(_) | Err(Error::UnknownPduType(_)) | Err(Error::Malformed(_)) | Err(Error::InvalidAeTitle(_)) => {
            send_abort(&mut stream);
            return Err(Error::Protocol("expected A-ASSOCIATE-RQ".into()));
        }
        Err(e) => return Err(e),
    };
    let ac = match negotiate_accept(&rq, policy) {
        Negotiation::Reject(rj) => {
            std::io::Write::write_all(&mut stream, &encode_pdu(&Pdu::AssociateRj(rj))?)?;
            let _ = stream.shutdown(Shutdown::Write);
            return Ok(());
        }
        Negotiation::Accept(ac) => ac,
    };
    std::io::Write::write_all(&mut stream, &encode_pdu(&Pdu::AssociateAc(ac.clone()))?)?;
    let contexts = ac
        .contexts
        .iter()
        .filter(|c| c.result == ContextResult::Acceptance)
        .filter_map(|c| {
            rq.contexts.iter().find(|p| p.id == c.id).map(|p| AcceptedContext {
                id: c.id,
                abstract_syntax: p.abstract_syntax.clone(),
                transfer_syntax: c.transfer_syntax.clone(),
            })
        })
        .collect();
    let meta = AssociationMeta {
        calling: rq.calling.clone(),
        called: rq.called.clone(),
        peer_addr,
    };
    let mut assoc = Association::new(stream, meta.clone(), rq.user_info.max_pdu_length, policy.max_pdu_length, contexts)?;

    loop {
        let incoming = match assoc.recv_message() {
            Ok(i) => i,
            Err(e) => {
                assoc.abort();
                return Err(e);
            }
        };
        match incoming {
            Incoming::Message(m) => {
                let reply = match m.command.command_field {
                    command::C_STORE_RQ => {
                        let ctx = assoc.context(m.context_id).cloned().expect("context checked on receipt");
                        let st = store_one(&meta, &ctx, &m.command, m.data.as_deref(), handler);
                        command::c_store_rsp(&m.command, st)?
                    }
                    command::C_ECHO_RQ => command::c_echo_rsp(&m.command)?,
                    other => {
                        assoc.abort();
                        return Err(Error::Protocol(format!("unsupported DIMSE command {other:#06x}")));
                    }
                };
                assoc.send_message(m.context_id, &reply, None)?;
            }
            Incoming::ReleaseRequested => {
                assoc.confirm_release()?;
                return Ok(());
            }
            Incoming::Aborted(_) => return Ok(()),
        }
    }
}

fn store_one(
    meta: &AssociationMeta,
    ctx: &AcceptedContext,
    cmd: &command::Command,
    data: Option<&[u8]>,
    handler: &dyn StoreHandler,
) -> u16 {
    let Some(data) = data else {
        return status::CANNOT_UNDERSTAND;
    };
    let dataset = match parse_dataset(data, &ctx.transfer_syntax) {
        Ok(ds) => ds,
        Err(e) => {
            log::warn!("undecodable dataset from {}: {e}", meta.calling);
            return status::CANNOT_UNDERSTAND;
        }
    };
    let mut file = DicomFile::new(
        &cmd.affected_sop_class,
        &cmd.affected_sop_instance,
        &ctx.transfer_syntax,
        dataset,
    );
    file.file_meta.set_text(tags::SOURCE_AE_TITLE, Vr::AE, meta.calling.as_str());
    match catch_unwind(AssertUnwindSafe(|| handler.handle_store(meta, file))) {
        Ok(s) => s,
        Err(_) => {
            log::error!("store handler panicked for {}", cmd.affected_sop_instance);
            status::CANNOT_UNDERSTAND
        }
    }
}
