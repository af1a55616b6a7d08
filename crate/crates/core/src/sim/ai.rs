//! AI receiver: collects studies over DIMSE, runs the application graph
//! on each one after it has gone quiet, and stores the results back.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::dicom::{tags, DicomFile};
use crate::dimse::{scp_serve, scu_store, status, AeTitle, AssociationMeta, ScpConfig, ScpHandle, ScuOptions, StoreHandler};
use crate::map::{run_app, AppGraph, RunConfig, RunManifest};

use super::Error;

#[derive(Clone, Debug)]
pub struct AiReceiverConfig {
    pub bind: String,
    pub ae_title: AeTitle,
    pub work_dir: PathBuf,
    pub graph: AppGraph,
    pub run: RunConfig,
    /// A study is processed once nothing has arrived for it this long.
    pub inactivity: Duration,
    /// Where results go, and the AE title to call there.
    pub return_to: Option<(String, AeTitle)>,
}

/// One processed study.
#[derive(Clone, Debug)]
pub struct AiRun {
    pub study_uid: String,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
    /// Status per result file sent back.
    pub statuses: Vec<u16>,
}

#[derive(Default)]
struct Pending {
    studies: BTreeMap<String, Instant>,
}

struct State {
    cfg: AiReceiverConfig,
    pending: Mutex<Pending>,
    runs: Mutex<Vec<AiRun>>,
    return_to: Mutex<Option<(String, AeTitle)>>,
}

impl StoreHandler for State {
    fn handle_store(&self, _meta: &AssociationMeta, file: DicomFile) -> u16 {
        let study = file.dataset.get_string(tags::STUDY_INSTANCE_UID).unwrap_or_default();
        let sop = file.sop_instance_uid().unwrap_or_default().to_string();
        if study.is_empty() || sop.is_empty() || study.contains(['/', '\\']) || sop.contains(['/', '\\']) {
            return status::CANNOT_UNDERSTAND;
        }
        let dir = self.cfg.work_dir.join("incoming").join(&study);
        let written = std::fs::create_dir_all(&dir).map_err(crate::dicom::Error::from).and_then(|_| file.write(&dir.join(format!("{sop}.dcm"))));
        if let Err(e) = written {
            log::error!("ai receiver cannot store {sop}: {e}");
            return status::OUT_OF_RESOURCES;
        }
        self.pending.lock().unwrap_or_else(|p| p.into_inner()).studies.insert(study, Instant::now());
        status::SUCCESS
    }
}

impl State {
    fn due(&self) -> Vec<String> {
        let mut p = self.pending.lock().unwrap_or_else(|p| p.into_inner());
        let due: Vec<String> = p
            .studies
            .iter()
            .filter(|(_, t)| t.elapsed() >= self.cfg.inactivity)
            .map(|(s, _)| s.clone())
            .collect();
        for s in &due {
            p.studies.remove(s);
        }
        due
    }

    fn process(&self, study_uid: &str) -> AiRun {
        let input = self.cfg.work_dir.join("incoming").join(study_uid);
        let output = self.cfg.work_dir.join("output").join(study_uid);
        let mut run = AiRun {
            study_uid: study_uid.to_string(),
            manifest: None,
            error: None,
            statuses: Vec::new(),
        };
        match run_app(&self.cfg.graph, &input, &output, &self.cfg.run) {
            Ok(m) => run.manifest = Some(m),
            Err(e) => {
                run.error = Some(e.to_string());
                return run;
            }
        }
        let files: Result<Vec<DicomFile>, _> = run
            .manifest
            .iter()
            .flat_map(|m| m.written_files())
            .map(|p| DicomFile::read(p))
            .collect();
        let files = match files {
            Ok(f) => f,
            Err(e) => {
                run.error = Some(format!("cannot read results: {e}"));
                return run;
            }
        };
        let target = self.return_to.lock().unwrap_or_else(|p| p.into_inner()).clone();
        match target {
            Some((endpoint, called)) if !files.is_empty() => {
                match scu_store(&endpoint, &self.cfg.ae_title, &called, &files, &ScuOptions::default()) {
                    Ok(st) => run.statuses = st,
                    Err(e) => run.error = Some(format!("returning results: {e}")),
                }
            }
            Some(_) => {}
            None => run.error = Some("no return destination".into()),
        }
        run
    }
}

pub struct AiReceiver {
    scp: Option<ScpHandle>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
    state: Arc<State>,
}

impl AiReceiver {
    pub fn start(cfg: AiReceiverConfig) -> Result<AiReceiver, Error> {
        std::fs::create_dir_all(&cfg.work_dir)?;
        let scp_cfg = ScpConfig::new(cfg.bind.clone(), cfg.ae_title.clone());
        let state = Arc::new(State {
            return_to: Mutex::new(cfg.return_to.clone()),
            cfg,
            pending: Mutex::new(Pending::default()),
            runs: Mutex::new(Vec::new()),
        });
        let scp = scp_serve(scp_cfg, state.clone()).map_err(|e| match e {
            crate::dimse::Error::BindFailed(m) => Error::BindFailed(m),
            other => Error::Dimse(other),
        })?;
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let (state, stop) = (state.clone(), stop.clone());
            let tick = (state.cfg.inactivity / 4).clamp(Duration::from_millis(5), Duration::from_millis(200));
            std::thread::Builder::new().name("ai-receiver".into()).spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    std::thread::sleep(tick);
                    for study in state.due() {
                        let run = state.process(&study);
                        if let Some(e) = &run.error {
                            log::warn!("ai receiver, study {study}: {e}");
                        }
                        state.runs.lock().unwrap_or_else(|p| p.into_inner()).push(run);
                    }
                }
            })?
        };
        Ok(AiReceiver {
            scp: Some(scp),
            stop,
            worker: Some(worker),
            state,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.scp.as_ref().expect("running").local_addr()
    }

    pub fn port(&self) -> u16 {
        self.local_addr().port()
    }

    pub fn set_return_to(&self, endpoint: &str, called: AeTitle) {
        *self.state.return_to.lock().unwrap_or_else(|p| p.into_inner()) = Some((endpoint.to_string(), called));
    }

    pub fn runs(&self) -> Vec<AiRun> {
        self.state.runs.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn work_dir(&self) -> &Path {
        &self.state.cfg.work_dir
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        if let Some(scp) = self.scp.take() {
            scp.shutdown();
        }
        self.stop.store(true, Ordering::SeqCst);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for AiReceiver {
    fn drop(&mut self) {
        self.stop_inner();
    }
}
