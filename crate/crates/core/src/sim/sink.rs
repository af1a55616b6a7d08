//! Storage sink: a C-STORE SCP that files every object it accepts under
//! its SOP instance UID and appends a digest line to a manifest.

use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::dicom::{serialize_part10, DicomFile};
use crate::dimse::{scp_serve, status, AeTitle, AssociationMeta, ScpConfig, ScpHandle, StoreHandler};
use crate::uid::{Clock, SystemClock};

use super::Error;

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Injected sink behaviour, written as space-separated `key=value` words:
/// `delay=300` (ms before each answer), `fail_first=2` (number of stores
/// to fail), `status=A700` (hex status for failed stores).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SinkScript {
    pub delay: Duration,
    pub fail_first: Option<u32>,
    pub status: Option<u16>,
}

impl FromStr for SinkScript {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut script = SinkScript::default();
        for word in s.split_whitespace() {
            let (k, v) = word.split_once('=').ok_or_else(|| format!("expected key=value, got {word:?}"))?;
            match k {
                "delay" => script.delay = Duration::from_millis(v.parse().map_err(|_| format!("bad delay {v:?}"))?),
                "fail_first" => script.fail_first = Some(v.parse().map_err(|_| format!("bad fail_first {v:?}"))?),
                "status" => {
                    let hex = v.trim_start_matches("0x").trim_start_matches("0X");
                    script.status = Some(u16::from_str_radix(hex, 16).map_err(|_| format!("bad status {v:?}"))?);
                }
                other => return Err(format!("unknown script key {other:?}")),
            }
        }
        Ok(script)
    }
}

impl SinkScript {
    /// Status forced on the `n`th store (1-based), if any.
    fn forced(&self, n: u32) -> Option<u16> {
        match (self.fail_first, self.status) {
            (None, None) => None,
            (Some(k), st) => (n <= k).then(|| st.unwrap_or(status::OUT_OF_RESOURCES)),
            (None, Some(st)) => Some(st),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinkEntry {
    pub sop_instance_uid: String,
    pub bytes: u64,
    /// Hex SHA-256 of the stored Part 10 bytes.
    pub digest: String,
    pub received: String,
    pub calling_ae: String,
}

impl SinkEntry {
    fn line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\n",
            self.sop_instance_uid, self.bytes, self.digest, self.received, self.calling_ae
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        let [sop, bytes, digest, received, calling] = f[..] else { return None };
        Some(SinkEntry {
            sop_instance_uid: sop.to_string(),
            bytes: bytes.parse().ok()?,
            digest: digest.to_string(),
            received: received.to_string(),
            calling_ae: calling.to_string(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a sink manifest; a missing file is empty.
pub fn read_sink_manifest(path: &Path) -> std::io::Result<Vec<SinkEntry>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text.lines().filter_map(SinkEntry::parse).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

struct SinkState {
    dir: PathBuf,
    script: SinkScript,
    count: AtomicU32,
    manifest: Mutex<()>,
}

impl SinkState {
    fn store(&self, meta: &AssociationMeta, file: &DicomFile) -> Result<(), String> {
        let sop = file.sop_instance_uid().ok_or("no SOP instance UID")?.to_string();
        if sop.is_empty() || sop.contains(['/', '\\']) || sop.starts_with('.') {
            return Err(format!("unusable SOP instance UID {sop:?}"));
        }
        let bytes = serialize_part10(file).map_err(|e| e.to_string())?;
        let entry = SinkEntry {
            sop_instance_uid: sop.clone(),
            bytes: bytes.len() as u64,
            digest: sha256_hex(&bytes),
            received: SystemClock.now().format("%Y-%m-%dT%H:%M:%S%.3f").to_string(),
            calling_ae: meta.calling.to_string(),
        };
        let _guard = self.manifest.lock().unwrap_or_else(|p| p.into_inner());
        std::fs::write(self.dir.join(format!("{sop}.dcm")), &bytes).map_err(|e| e.to_string())?;
        let mut m = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(MANIFEST_FILE))
            .map_err(|e| e.to_string())?;
        m.write_all(entry.line().as_bytes()).map_err(|e| e.to_string())
    }
}

impl StoreHandler for SinkState {
    fn handle_store(&self, meta: &AssociationMeta, file: DicomFile) -> u16 {
        let n = self.count.fetch_add(1, Ordering::SeqCst) + 1;
        std::thread::sleep(self.script.delay);
        if let Some(st) = self.script.forced(n) {
            return st;
        }
        match self.store(meta, &file) {
            Ok(()) => status::SUCCESS,
            Err(e) => {
                log::error!("sink store failed: {e}");
                status::OUT_OF_RESOURCES
            }
        }
    }
}

/// A running storage sink; dropping it stops the listener.
pub struct StoreSink {
    scp: ScpHandle,
    dir: PathBuf,
    state: Arc<SinkState>,
}

impl StoreSink {
    pub fn local_addr(&self) -> SocketAddr {
        self.scp.local_addr()
    }

    pub fn port(&self) -> u16 {
        self.scp.port()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    pub fn entries(&self) -> Vec<SinkEntry> {
        let _guard = self.state.manifest.lock().unwrap_or_else(|p| p.into_inner());
        read_sink_manifest(&self.manifest_path()).unwrap_or_default()
    }

    /// Store requests seen, failed ones included.
    pub fn attempts(&self) -> u32 {
        self.state.count.load(Ordering::SeqCst)
    }

    pub fn read_stored(&self, sop_instance_uid: &str) -> Result<DicomFile, Error> {
        Ok(DicomFile::read(&self.dir.join(format!("{sop_instance_uid}.dcm")))?)
    }

    pub fn shutdown(self) {
        self.scp.shutdown();
    }
}

pub fn run_store_sink(bind: &str, ae_title: AeTitle, out_dir: &Path, script: SinkScript) -> Result<StoreSink, Error> {
    std::fs::create_dir_all(out_dir)?;
    let state = Arc::new(SinkState {
        dir: out_dir.to_path_buf(),
        script,
        count: AtomicU32::new(0),
        manifest: Mutex::new(()),
    });
    let scp = scp_serve(ScpConfig::new(bind, ae_title), state.clone()).map_err(|e| match e {
        crate::dimse::Error::BindFailed(m) => Error::BindFailed(m),
        other => Error::Dimse(other),
    })?;
    Ok(StoreSink {
        scp,
        dir: out_dir.to_path_buf(),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_parsing() {
        let s: SinkScript = "delay=300 fail_first=2 status=A700".parse().unwrap();
        assert_eq!(s.delay, Duration::from_millis(300));
        assert_eq!((s.forced(1), s.forced(2), s.forced(3)), (Some(0xA700), Some(0xA700), None));
        let always: SinkScript = "status=0xC000".parse().unwrap();
        assert_eq!(always.forced(99), Some(0xC000));
        assert_eq!(SinkScript::default().forced(1), None);
        assert!("delay".parse::<SinkScript>().is_err());
        assert!("speed=3".parse::<SinkScript>().is_err());
    }

    #[test]
    fn manifest_lines_round_trip() {
        let e = SinkEntry {
            sop_instance_uid: "1.2.3".into(),
            bytes: 10,
            digest: sha256_hex(b"abc"),
            received: "t".into(),
            calling_ae: "GW".into(),
        };
        assert_eq!(SinkEntry::parse(e.line().trim_end()), Some(e));
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
