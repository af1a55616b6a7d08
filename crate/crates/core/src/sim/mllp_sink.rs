//! Interface-engine stand-in: accepts MLLP frames, keeps each message
//! and acknowledges according to its mode.

use std::io::{BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::hl7::{build_ack, mllp_frame, parse_message, read_frame, AckCode};
use crate::uid::{hl7_timestamp, Clock, SystemClock};

use super::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckMode {
    Accept,
    Error,
    /// Never answers.
    Silent,
}

impl FromStr for AckMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "AA" => Ok(AckMode::Accept),
            "AE" => Ok(AckMode::Error),
            "NONE" => Ok(AckMode::Silent),
            other => Err(format!("ack mode must be AA, AE or none, got {other:?}")),
        }
    }
}

struct State {
    dir: PathBuf,
    mode: AckMode,
    next: AtomicU64,
    messages: Mutex<Vec<Vec<u8>>>,
}

pub struct MllpSink {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    state: Arc<State>,
}

impl MllpSink {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn dir(&self) -> &Path {
        &self.state.dir
    }

    /// Raw messages in arrival order.
    pub fn messages(&self) -> Vec<Vec<u8>> {
        self.state.messages.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MllpSink {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

fn serve_connection(state: &State, stream: TcpStream, stop: &AtomicBool) -> Result<(), crate::hl7::Error> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(crate::hl7::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    return Ok(());
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let n = state.next.fetch_add(1, Ordering::SeqCst) + 1;
        std::fs::write(state.dir.join(format!("msg_{n:04}.hl7")), &frame)?;
        state.messages.lock().unwrap_or_else(|p| p.into_inner()).push(frame.clone());
        let code = match (state.mode, parse_message(&frame)) {
            (AckMode::Silent, _) => continue,
            (_, Err(_)) => AckCode::AR,
            (AckMode::Accept, Ok(_)) => AckCode::AA,
            (AckMode::Error, Ok(_)) => AckCode::AE,
        };
        let ack = match parse_message(&frame) {
            Ok(original) => build_ack(&original, code, &hl7_timestamp(&SystemClock.now()), &format!("ACK{n}")),
            Err(_) => continue,
        };
        out.write_all(&mllp_frame(&ack.encode()?))?;
    }
}

pub fn run_mllp_sink(bind: &str, mode: AckMode, out_dir: &Path) -> Result<MllpSink, Error> {
    std::fs::create_dir_all(out_dir)?;
    let listener = TcpListener::bind(bind).map_err(|e| Error::BindFailed(format!("{bind}: {e}")))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let state = Arc::new(State {
        dir: out_dir.to_path_buf(),
        mode,
        next: AtomicU64::new(0),
        messages: Mutex::new(Vec::new()),
    });
    let stop = Arc::new(AtomicBool::new(false));
    let thread = {
        let (state, stop) = (state.clone(), stop.clone());
        std::thread::Builder::new().name(format!("mllp-sink-{}", addr.port())).spawn(move || {
            let mut conns: Vec<JoinHandle<()>> = Vec::new();
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let (state, stop) = (state.clone(), stop.clone());
                        conns.push(std::thread::spawn(move || {
                            if let Err(e) = serve_connection(&state, stream, &stop) {
                                log::debug!("mllp sink connection: {e}");
                            }
                        }));
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
                    Err(e) => log::warn!("mllp sink accept: {e}"),
                }
            }
            for c in conns {
                let _ = c.join();
            }
        })?
    };
    Ok(MllpSink {
        addr,
        stop,
        thread: Some(thread),
        state,
    })
}
