//! Outbound delivery. Each destination gets one worker thread fed by a
//! FIFO queue, so instances reach a destination in the order they were
//! queued; distinct destinations proceed independently.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::dicom::DicomFile;
use crate::dimse::{scu_store, status, AeTitle, ScuOptions};
use crate::rules::RouteMode;

use super::audit::AuditCategory;
use super::Inner;

/// Runs once a delivery settles; the flag says whether it was delivered.
pub(crate) type Then = Box<dyn FnOnce(&Arc<Inner>, bool) + Send>;

pub(crate) struct Job {
    pub study_uid: String,
    pub file: DicomFile,
    pub then: Option<Then>,
}

/// Most instances sent over one association.
const BATCH: usize = 32;

impl Job {
    fn sop(&self) -> String {
        self.file.sop_instance_uid().unwrap_or_default().to_string()
    }
}

/// Calls `done` once every member has settled, with `true` only if all
/// were delivered.
pub(crate) struct Group {
    remaining: AtomicUsize,
    all_ok: AtomicBool,
    done: Mutex<Option<Then>>,
}

impl Group {
    pub fn new(size: usize, done: Then) -> Arc<Self> {
        Arc::new(Group {
            remaining: AtomicUsize::new(size),
            all_ok: AtomicBool::new(true),
            done: Mutex::new(Some(done)),
        })
    }

    pub fn member(self: &Arc<Self>) -> Then {
        let g = self.clone();
        Box::new(move |inner, ok| g.finish(inner, ok))
    }

    fn finish(&self, inner: &Arc<Inner>, ok: bool) {
        if !ok {
            self.all_ok.store(false, Ordering::SeqCst);
        }
        if self.remaining.fetch_sub(1, Ordering::SeqCst) == 1 {
            let done = self.done.lock().unwrap_or_else(|p| p.into_inner()).take();
            if let Some(done) = done {
                done(inner, self.all_ok.load(Ordering::SeqCst));
            }
        }
    }
}

impl Inner {
    /// Queues `file` for every destination. Parallel destinations are
    /// queued now; serial ones form a chain in listed order, each queued
    /// when the one before it settles.
    pub(crate) fn route(self: &Arc<Self>, study_uid: &str, file: &DicomFile, dests: &[(String, RouteMode)], group: Option<Arc<Group>>) {
        let mut serial: Vec<String> = Vec::new();
        for (name, mode) in dests {
            match mode {
                RouteMode::Parallel => self.enqueue(
                    name,
                    Job {
                        study_uid: study_uid.to_string(),
                        file: file.clone(),
                        then: group.as_ref().map(|g| g.member()),
                    },
                ),
                RouteMode::Serial => serial.push(name.clone()),
            }
        }
        if !serial.is_empty() {
            self.chain(study_uid.to_string(), file.clone(), serial, 0, group);
        }
    }

    fn chain(self: &Arc<Self>, study_uid: String, file: DicomFile, dests: Vec<String>, at: usize, group: Option<Arc<Group>>) {
        let name = dests[at].clone();
        let member = group.as_ref().map(|g| g.member());
        let next = {
            let (study_uid, file) = (study_uid.clone(), file.clone());
            Box::new(move |inner: &Arc<Inner>, ok: bool| {
                if let Some(m) = member {
                    m(inner, ok);
                }
                if at + 1 < dests.len() {
                    inner.chain(study_uid, file, dests, at + 1, group);
                }
            }) as Then
        };
        self.enqueue(
            &name,
            Job {
                study_uid,
                file,
                then: Some(next),
            },
        );
    }

    pub(crate) fn enqueue(self: &Arc<Self>, dest: &str, job: Job) {
        self.begin_work();
        self.with_record(&job.study_uid, |r| {
            r.pending += 1;
            r.deliveries.entry(dest.to_string()).or_default().queued += 1;
        });
        let sent = {
            let mut queues = self.queues.lock().unwrap_or_else(|p| p.into_inner());
            if self.stop.load(Ordering::SeqCst) {
                Err(job)
            } else {
                let tx = queues.entry(dest.to_string()).or_insert_with(|| {
                    let (tx, rx) = channel();
                    let inner = self.clone();
                    let name = dest.to_string();
                    let handle = std::thread::Builder::new()
                        .name(format!("dispatch-{dest}"))
                        .spawn(move || inner.worker(&name, rx))
                        .expect("spawn dispatch worker");
                    self.workers.lock().unwrap_or_else(|p| p.into_inner()).push(handle);
                    tx
                });
                tx.send(job).map_err(|e| e.0)
            }
        };
        if let Err(job) = sent {
            self.settle(dest, job, Err("gateway stopping".into()), 0);
        }
    }

    fn worker(self: &Arc<Self>, dest: &str, rx: Receiver<Job>) {
        while let Ok(first) = rx.recv() {
            let mut batch = vec![first];
            while batch.len() < BATCH {
                match rx.try_recv() {
                    Ok(j) => batch.push(j),
                    Err(_) => break,
                }
            }
            self.deliver(dest, batch);
        }
    }

    /// Sends a batch, retrying what remains after a failure with
    /// exponential backoff, and dead-letters whatever is left at the end.
    fn deliver(self: &Arc<Self>, dest: &str, mut batch: Vec<Job>) {
        let policy = self.cfg.retry.clone();
        let mut attempt = 1;
        loop {
            let cause = match self.store_batch(dest, &batch) {
                Ok(statuses) => {
                    let done = statuses.iter().take_while(|s| status::is_success(**s)).count();
                    for (job, st) in batch.drain(..done).zip(&statuses) {
                        self.settle(dest, job, Ok(*st), attempt);
                    }
                    match statuses.get(done) {
                        None if batch.is_empty() => return,
                        None => format!("peer answered {} of {} stores", statuses.len(), statuses.len() + batch.len()),
                        Some(st) => {
                            self.with_record(&batch[0].study_uid, |r| {
                                r.deliveries.entry(dest.to_string()).or_default().last_status = Some(*st);
                            });
                            format!("status 0x{st:04X}")
                        }
                    }
                }
                Err(e) => e,
            };
            if attempt >= policy.max_attempts {
                for job in batch {
                    self.settle(dest, job, Err(format!("{cause} after {attempt} attempts")), attempt);
                }
                return;
            }
            log::warn!("delivery to {dest} failed ({cause}); attempt {attempt} of {}", policy.max_attempts);
            for job in &batch {
                self.with_record(&job.study_uid, |r| r.deliveries.entry(dest.to_string()).or_default().retries += 1);
            }
            std::thread::sleep(policy.backoff(attempt));
            attempt += 1;
        }
    }

    fn store_batch(&self, dest: &str, batch: &[Job]) -> Result<Vec<u16>, String> {
        let engine = self.rules.snapshot();
        let def = engine
            .rules()
            .destination(dest)
            .ok_or_else(|| format!("destination {dest} is not defined"))?;
        let calling: AeTitle = def.calling_ae.clone().unwrap_or_else(|| self.cfg.ae_titles[0].clone());
        let opts = ScuOptions {
            connect_timeout: Duration::from_secs(5),
            stop_on_failure: true,
            ..ScuOptions::default()
        };
        let files: Vec<DicomFile> = batch.iter().map(|j| j.file.clone()).collect();
        scu_store(&def.endpoint(), &calling, &def.called_ae, &files, &opts).map_err(|e| e.to_string())
    }

    /// Records the outcome of one job, runs its continuation and then
    /// releases its pending count, so a chained next hop is queued before
    /// the study can look idle.
    fn settle(self: &Arc<Self>, dest: &str, job: Job, outcome: Result<u16, String>, attempt: u32) {
        let sop = job.sop();
        let version = self.rules.version();
        let ok = match &outcome {
            Ok(st) => {
                self.with_record(&job.study_uid, |r| {
                    let l = r.deliveries.entry(dest.to_string()).or_default();
                    l.delivered += 1;
                    l.last_status = Some(*st);
                });
                self.audit.append(
                    self.clock.as_ref(),
                    AuditCategory::Forwarded,
                    &job.study_uid,
                    format!("dest={dest} sop={sop} status=0x{st:04X} attempts={attempt}"),
                    version,
                );
                true
            }
            Err(cause) => {
                self.with_record(&job.study_uid, |r| r.deliveries.entry(dest.to_string()).or_default().dead_lettered += 1);
                let where_ = self.dead_letter_file(dest, &job.file, cause);
                self.audit.append(
                    self.clock.as_ref(),
                    AuditCategory::Error,
                    &job.study_uid,
                    format!("dead-lettered dest={dest} sop={sop}: {cause}{where_}"),
                    version,
                );
                false
            }
        };
        if let Some(then) = job.then {
            then(self, ok);
        }
        self.with_record(&job.study_uid, |r| {
            r.pending = r.pending.saturating_sub(1);
            r.last_activity = std::time::Instant::now();
        });
        self.end_work();
    }

    fn dead_letter_file(&self, dest: &str, file: &DicomFile, cause: &str) -> String {
        let dir = self.cfg.dead_letter_dir.join(dest);
        let sop = file.sop_instance_uid().unwrap_or("unknown").to_string();
        let written = std::fs::create_dir_all(&dir)
            .map_err(|e| e.to_string())
            .and_then(|_| file.write(&dir.join(format!("{sop}.dcm"))).map_err(|e| e.to_string()))
            .and_then(|_| std::fs::write(dir.join(format!("{sop}.reason")), format!("{cause}\n")).map_err(|e| e.to_string()));
        match written {
            Ok(()) => format!(" ({})", dir.join(format!("{sop}.dcm")).display()),
            Err(e) => format!(" (dead-letter write failed: {e})"),
        }
    }
}
