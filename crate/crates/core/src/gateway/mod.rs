//! The router service: receives instances, routes them by rule, tracks
//! each study through its lifecycle and turns AI results into viewer
//! copies and HL7 priority messages.

mod audit;
mod config;
mod dispatch;
mod record;

pub use audit::{read_audit, AuditCategory, AuditEvent, AuditFilter, AuditLog};
pub use config::{load_rules, GatewayConfig, Hl7Settings, RetryPolicy};
pub use record::{next_state, DeliveryLedger, IllegalTransition, StudyEvent, StudyRecord, StudyState};

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::dicom::{sop, tags, DicomFile};
use crate::dimse::{scp_serve, status, AcceptPolicy, AssociationMeta, ScpConfig, ScpHandle, StoreHandler};
use crate::hl7::{build_orm_o01, mllp_send, AckCode, Hl7Message, OrderInfo, OrmContext, PatientIdent};
use crate::rules::{apply_morphs, MorphWarning, Priority, RouteMode, RulesetHolder, SourceDef, SourceKind};
use crate::sr::{concepts, extract_fields, parse_sr_tree, sr_context};
use crate::uid::{hl7_timestamp, Clock, SystemClock, UidSource};

use dispatch::{Group, Job};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration {path}:{line}: {message}")]
    ConfigInvalid { path: String, line: usize, message: String },
    #[error("cannot bind {0}")]
    BindFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn from_rules(path: &Path, e: crate::rules::Error) -> Self {
        use crate::rules::Error as R;
        let line = match &e {
            R::Syntax { line, .. } | R::UnresolvedReference { line, .. } | R::DuplicateName { line, .. } => *line,
            R::StaleVersion { .. } => 0,
        };
        Error::config(path, line, e.to_string())
    }
}

pub(crate) struct Inner {
    cfg: GatewayConfig,
    rules: RulesetHolder,
    audit: AuditLog,
    clock: Box<dyn Clock>,
    uids: UidSource,
    records: Mutex<BTreeMap<String, StudyRecord>>,
    changed: Condvar,
    work: Mutex<u64>,
    idle: Condvar,
    queues: Mutex<HashMap<String, Sender<Job>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    stop: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Inner {
    fn begin_work(&self) {
        *lock(&self.work) += 1;
    }

    fn end_work(&self) {
        let mut w = lock(&self.work);
        *w = w.saturating_sub(1);
        if *w == 0 {
            self.idle.notify_all();
        }
    }

    /// Runs `f` on the record for `study_uid`, if there is one.
    fn with_record<R>(&self, study_uid: &str, f: impl FnOnce(&mut StudyRecord) -> R) -> Option<R> {
        let mut records = lock(&self.records);
        let out = records.get_mut(study_uid).map(f);
        self.changed.notify_all();
        out
    }

    fn audit(&self, category: AuditCategory, study_uid: &str, detail: impl Into<String>) {
        self.audit.append(self.clock.as_ref(), category, study_uid, detail, self.rules.version());
    }

    /// Applies `event`, auditing an illegal one as an error.
    fn transition(&self, rec: &mut StudyRecord, event: StudyEvent) -> bool {
        match rec.apply(&event, self.clock.now()) {
            Ok(_) => {
                self.changed.notify_all();
                true
            }
            Err(e) => {
                self.audit(AuditCategory::Error, &rec.study_uid.clone(), format!("illegal transition: {e}"));
                false
            }
        }
    }

    fn resolve_source(&self, meta: &AssociationMeta) -> Option<SourceDef> {
        let engine = self.rules.snapshot();
        match engine.rules().resolve_source(&meta.calling, Some(meta.peer_addr.ip())) {
            Some(s) => Some(s.clone()),
            None if self.cfg.allow_unknown_sources => Some(SourceDef::new("unknown", meta.calling.clone())),
            None => None,
        }
    }

    fn handle_inbound(self: &Arc<Self>, meta: &AssociationMeta, mut file: DicomFile) -> u16 {
        let Some(source) = self.resolve_source(meta) else {
            self.audit(AuditCategory::Error, "", format!("refused instance from unknown source {} ({})", meta.calling, meta.peer_addr));
            return status::REFUSED_NOT_AUTHORIZED;
        };
        if source.kind == SourceKind::Ai {
            return self.handle_ai_result(&source, file);
        }
        let ds = &file.dataset;
        let study_uid = ds.get_string(tags::STUDY_INSTANCE_UID).unwrap_or_default();
        let sop_uid = file.sop_instance_uid().unwrap_or_default().to_string();
        if study_uid.is_empty() {
            self.audit(AuditCategory::Error, "", format!("instance {sop_uid} from {} has no StudyInstanceUID", source.name));
            return status::CANNOT_UNDERSTAND;
        }
        self.audit(
            AuditCategory::Received,
            &study_uid,
            format!("sop={sop_uid} source={} calling={}", source.name, meta.calling),
        );
        let engine = self.rules.snapshot();
        let decision = engine.evaluate(ds, &source);
        let dests: Vec<String> = decision.destinations.iter().map(|(d, m)| format!("{d}({m})")).collect();
        let version = decision.ruleset_version;
        self.audit.append(
            self.clock.as_ref(),
            AuditCategory::Decision,
            &study_uid,
            format!(
                "sop={sop_uid} matched=[{}] dests=[{}] priority={} blocked={}",
                decision.matched.join(","),
                dests.join(","),
                decision.priority.map_or("-", |p| p.as_str()),
                decision.blocked
            ),
            version,
        );
        if decision.blocked {
            let why = decision.block_reason.map(|r| r.to_string()).unwrap_or_default();
            self.audit.append(self.clock.as_ref(), AuditCategory::Blocked, &study_uid, format!("sop={sop_uid} by {why}"), version);
            return status::SUCCESS;
        }

        {
            let mut records = lock(&self.records);
            let accession = ds.get_string(tags::ACCESSION_NUMBER).unwrap_or_default();
            let now = self.clock.now();
            let rec = records
                .entry(study_uid.clone())
                .or_insert_with(|| StudyRecord::new(&study_uid, &accession, source.calling_ae.as_str(), now));
            if rec.instances > 0 {
                self.transition(rec, StudyEvent::InstanceReceived);
            }
            rec.instances += 1;
            rec.last_activity = Instant::now();
            if decision.priority > rec.priority {
                rec.priority = decision.priority;
            }
            if decision.destinations.iter().any(|(d, _)| self.cfg.ai_dests.contains(d)) {
                rec.ai_routed = true;
            }
            self.changed.notify_all();
        }

        if !decision.morphs.is_empty() {
            let (morphed, warnings) = apply_morphs(std::mem::take(&mut file.dataset), &decision.morphs);
            file.dataset = morphed;
            let ops: Vec<String> = decision.morphs.iter().map(|m| m.to_string()).collect();
            let skipped: Vec<String> = warnings
                .iter()
                .map(|MorphWarning::CopySourceMissing { from, to }| format!("copy {from} -> {to} skipped, source missing"))
                .collect();
            let mut detail = format!("sop={sop_uid} ops=[{}]", ops.join("; "));
            if !skipped.is_empty() {
                detail.push_str(&format!(" warnings=[{}]", skipped.join("; ")));
            }
            self.audit.append(self.clock.as_ref(), AuditCategory::Morphed, &study_uid, detail, version);
        }
        self.route(&study_uid, &file, &decision.destinations, None);
        status::SUCCESS
    }

    /// Finds the record an AI result belongs to: by study UID, then by
    /// accession number.
    fn correlate(&self, study_uid: &str, accession: &str) -> Option<String> {
        let records = lock(&self.records);
        if records.contains_key(study_uid) {
            return Some(study_uid.to_string());
        }
        if accession.is_empty() {
            return None;
        }
        records.values().find(|r| r.accession == accession).map(|r| r.study_uid.clone())
    }

    fn handle_ai_result(self: &Arc<Self>, source: &SourceDef, file: DicomFile) -> u16 {
        let ds = &file.dataset;
        let sop_uid = file.sop_instance_uid().unwrap_or_default().to_string();
        let class = file.sop_class_uid().unwrap_or_default().to_string();
        let study_uid = ds.get_string(tags::STUDY_INSTANCE_UID).unwrap_or_default();
        let accession = ds.get_string(tags::ACCESSION_NUMBER).unwrap_or_default();
        let kind = if sop::is_sr(&class) {
            "SR"
        } else if sop::is_secondary_capture(&class) {
            "SC"
        } else if sop::is_segmentation(&class) {
            "SEG"
        } else if sop::is_rt(&class) {
            "RT"
        } else {
            "OTHER"
        };

        let Some(key) = self.correlate(&study_uid, &accession) else {
            let path = self.cfg.quarantine_dir.join(format!("{sop_uid}.dcm"));
            let stored = std::fs::create_dir_all(&self.cfg.quarantine_dir)
                .map_err(|e| e.to_string())
                .and_then(|_| file.write(&path).map_err(|e| e.to_string()));
            let detail = match stored {
                Ok(()) => format!("unmatched {kind} result sop={sop_uid} accession={accession} quarantined at {}", path.display()),
                Err(e) => format!("unmatched {kind} result sop={sop_uid} accession={accession}; quarantine failed: {e}"),
            };
            self.audit(AuditCategory::Error, &study_uid, detail);
            return status::SUCCESS;
        };

        {
            let mut records = lock(&self.records);
            let rec = records.get_mut(&key).expect("correlated record exists");
            // a result can beat the inactivity window; settle the study first
            if rec.state == StudyState::Receiving {
                self.transition(rec, StudyEvent::StudyComplete);
            }
            if rec.state == StudyState::Forwarded && rec.ai_routed {
                self.transition(rec, StudyEvent::AiRouted);
            }
            let note = if rec.state == StudyState::AiPending {
                self.transition(rec, StudyEvent::AiResult);
                ""
            } else {
                " (additional)"
            };
            self.audit(
                AuditCategory::AiResult,
                &key,
                format!("{kind} sop={sop_uid} from {} state={}{note}", source.name, rec.state),
            );
        }

        let hl7_wanted = kind == "SR" && self.cfg.hl7.endpoint.is_some();
        let viewers: Vec<(String, RouteMode)> = self.cfg.viewer_dests.iter().map(|d| (d.clone(), RouteMode::Parallel)).collect();
        let sr_file = hl7_wanted.then(|| file.clone());
        let study = key.clone();
        let done: dispatch::Then = Box::new(move |inner, ok| {
            inner.results_forwarded(&study, ok);
            if let Some(f) = sr_file {
                inner.spawn_hl7(study, f);
            }
        });
        if viewers.is_empty() {
            done(self, true);
        } else {
            let group = Group::new(viewers.len(), done);
            self.route(&key, &file, &viewers, Some(group));
        }
        status::SUCCESS
    }

    fn results_forwarded(&self, study_uid: &str, ok: bool) {
        let mut records = lock(&self.records);
        let Some(rec) = records.get_mut(study_uid) else { return };
        if !ok {
            self.transition(rec, StudyEvent::Fail("result delivery to viewers failed".into()));
        } else if rec.state == StudyState::AiComplete {
            self.transition(rec, StudyEvent::ResultsDistributed);
        }
    }

    fn spawn_hl7(self: &Arc<Self>, study_uid: String, file: DicomFile) {
        self.begin_work();
        let inner = self.clone();
        let spawned = std::thread::Builder::new().name("hl7-send".into()).spawn(move || {
            inner.send_priority_message(&study_uid, &file);
            inner.end_work();
        });
        if let Err(e) = spawned {
            log::error!("cannot spawn HL7 sender: {e}");
            self.end_work();
        }
    }

    /// Builds the ORM for an SR result and sends it if its priority reaches
    /// the configured threshold.
    fn send_priority_message(&self, study_uid: &str, file: &DicomFile) {
        let tree = match parse_sr_tree(file) {
            Ok(t) => t,
            Err(e) => {
                self.audit(AuditCategory::Error, study_uid, format!("unreadable SR result: {e}"));
                return;
            }
        };
        let extraction = extract_fields(&tree, &self.cfg.template);
        for w in &extraction.warnings {
            log::warn!("study {study_uid}: {w}");
        }
        let priority_field = self
            .cfg
            .template
            .entries
            .iter()
            .find(|e| e.concept.same_concept(&concepts::priority()))
            .map(|e| e.field.clone());
        let priority: Option<Priority> = priority_field.and_then(|f| extraction.get(&f)).and_then(|v| v.parse().ok());
        if let Some(p) = priority {
            self.with_record(study_uid, |r| r.priority = r.priority.max(Some(p)));
        }
        if priority.is_none_or(|p| p < self.cfg.priority_threshold) {
            log::info!("study {study_uid}: priority {priority:?} below threshold, no HL7 message");
            return;
        }

        let ctx = sr_context(&file.dataset);
        let evaluation = if ctx.evaluation_type.is_empty() { "MONAI".to_string() } else { ctx.evaluation_type.clone() };
        let h = &self.cfg.hl7;
        let timestamp = hl7_timestamp(&self.clock.now());
        let orm_ctx = OrmContext {
            sending_app: h.sending_app.clone(),
            receiving_app: h.receiving_app.clone(),
            timestamp: timestamp.clone(),
            control_id: self.uids.next_guid(),
            processing_id: h.processing_id.clone(),
            version: h.version.clone(),
            patient: PatientIdent {
                id: ctx.patient.id,
                assigning: h.assigning_authority.clone(),
                family: ctx.patient.family,
                given: ctx.patient.given,
                birth_date: ctx.patient.birth_date,
            },
            order: OrderInfo {
                accession: ctx.accession,
                study_code: ctx.study.code,
                study_description: ctx.study.description,
                image_id: h.image_id.clone(),
                short_description: ctx.study.short_description,
                study_date: ctx.study.date,
                transaction_datetime: timestamp,
            },
            obx: extraction.fields.iter().map(|(f, v)| (format!("{f}_{evaluation}"), v.clone())).collect(),
        };
        let msg = match build_orm_o01(&orm_ctx, h.layout) {
            Ok(m) => m,
            Err(e) => {
                self.audit(AuditCategory::Error, study_uid, format!("cannot build ORM: {e}"));
                return;
            }
        };
        let endpoint = h.endpoint.clone().expect("checked by caller");
        match self.send_with_retry(&endpoint, &msg) {
            Ok(attempts) => {
                self.audit(
                    AuditCategory::Hl7Sent,
                    study_uid,
                    format!("ORM^O01 control_id={} to {endpoint} ack=AA attempts={attempts}", orm_ctx.control_id),
                );
                let mut records = lock(&self.records);
                if let Some(rec) = records.get_mut(study_uid) {
                    self.transition(rec, StudyEvent::Hl7Sent);
                }
            }
            Err(cause) => {
                let where_ = self.dead_letter_hl7(&orm_ctx.control_id, &msg, &cause);
                self.audit(AuditCategory::Error, study_uid, format!("HL7 send to {endpoint} failed: {cause}{where_}"));
                let mut records = lock(&self.records);
                if let Some(rec) = records.get_mut(study_uid) {
                    self.transition(rec, StudyEvent::Fail(format!("HL7 send failed: {cause}")));
                }
            }
        }
    }

    fn send_with_retry(&self, endpoint: &str, msg: &Hl7Message) -> Result<u32, String> {
        let policy = &self.cfg.retry;
        let mut attempt = 1;
        loop {
            let cause = match mllp_send(endpoint, msg, self.cfg.hl7.timeout) {
                Ok(AckCode::AA) => return Ok(attempt),
                Ok(code) => format!("acknowledged {}", code.as_str()),
                Err(e) => e.to_string(),
            };
            if attempt >= policy.max_attempts {
                return Err(format!("{cause} after {attempt} attempts"));
            }
            log::warn!("HL7 send to {endpoint} failed ({cause}); attempt {attempt} of {}", policy.max_attempts);
            std::thread::sleep(policy.backoff(attempt));
            attempt += 1;
        }
    }

    fn dead_letter_hl7(&self, control_id: &str, msg: &Hl7Message, cause: &str) -> String {
        let dir = self.cfg.dead_letter_dir.join("hl7");
        let path = dir.join(format!("{control_id}.hl7"));
        let written = std::fs::create_dir_all(&dir)
            .map_err(|e| e.to_string())
            .and_then(|_| msg.encode().map_err(|e| e.to_string()))
            .and_then(|bytes| std::fs::write(&path, bytes).map_err(|e| e.to_string()))
            .and_then(|_| std::fs::write(dir.join(format!("{control_id}.reason")), format!("{cause}\n")).map_err(|e| e.to_string()));
        match written {
            Ok(()) => format!(" ({})", path.display()),
            Err(e) => format!(" (dead-letter write failed: {e})"),
        }
    }

    /// Moves idle studies forward and fails those whose AI result is
    /// overdue.
    fn sweep(&self) {
        let mut records = lock(&self.records);
        for rec in records.values_mut() {
            match rec.state {
                StudyState::Receiving if rec.pending == 0 && rec.last_activity.elapsed() >= self.cfg.study_idle => {
                    self.transition(rec, StudyEvent::StudyComplete);
                    if rec.ai_routed {
                        self.transition(rec, StudyEvent::AiRouted);
                    }
                }
                StudyState::AiPending if rec.state_since.elapsed() >= self.cfg.ai_timeout => {
                    let waited = rec.state_since.elapsed();
                    self.audit(
                        AuditCategory::Error,
                        &rec.study_uid.clone(),
                        format!("no AI result after {:.1} s", waited.as_secs_f64()),
                    );
                    self.transition(rec, StudyEvent::AiTimeout);
                }
                _ => {}
            }
        }
    }

    fn reload(&self) -> Result<u64, Error> {
        let path = self
            .cfg
            .rules_path
            .as_ref()
            .ok_or_else(|| Error::config(Path::new("-"), 0, "rules were not loaded from a file"))?;
        let rules = load_rules(path)?;
        rules.validate().map_err(|e| Error::from_rules(path, e))?;
        self.cfg.check_destinations(&rules).map_err(|m| Error::config(path, 0, m))?;
        let version = self.rules.reload(rules).map_err(|e| Error::from_rules(path, e))?;
        log::info!("rules reloaded from {}, version {version}", path.display());
        Ok(version)
    }
}

struct Handler(Arc<Inner>);

impl StoreHandler for Handler {
    fn handle_store(&self, meta: &AssociationMeta, file: DicomFile) -> u16 {
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| self.0.handle_inbound(meta, file)));
        r.unwrap_or_else(|_| {
            log::error!("inbound handler panicked");
            status::CANNOT_UNDERSTAND
        })
    }
}

/// A running gateway. Dropping it stops the listener, the monitor and
/// the admin port, then lets queued deliveries drain.
pub struct Gateway {
    inner: Arc<Inner>,
    scp: Option<ScpHandle>,
    threads: Vec<JoinHandle<()>>,
    admin_addr: Option<SocketAddr>,
}

impl Gateway {
    pub fn start(cfg: GatewayConfig) -> Result<Gateway, Error> {
        let origin = cfg.rules_path.clone().unwrap_or_else(|| PathBuf::from("-"));
        cfg.rules.validate().map_err(|e| Error::from_rules(&origin, e))?;
        cfg.check_destinations(&cfg.rules).map_err(|m| Error::config(&origin, 0, m))?;
        for dir in [&cfg.quarantine_dir, &cfg.dead_letter_dir] {
            std::fs::create_dir_all(dir).map_err(|e| Error::config(&origin, 0, format!("cannot create {}: {e}", dir.display())))?;
        }
        let audit = AuditLog::open(&cfg.audit_log)
            .map_err(|e| Error::config(&origin, 0, format!("cannot open audit log {}: {e}", cfg.audit_log.display())))?;
        let uids = match cfg.seed {
            Some(s) => UidSource::seeded(s),
            None => UidSource::from_entropy(),
        };
        let inner = Arc::new(Inner {
            rules: RulesetHolder::new(cfg.rules.clone().with_version(1)),
            cfg,
            audit,
            clock: Box::new(SystemClock),
            uids,
            records: Mutex::new(BTreeMap::new()),
            changed: Condvar::new(),
            work: Mutex::new(0),
            idle: Condvar::new(),
            queues: Mutex::new(HashMap::new()),
            workers: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });

        let filter_inner = Arc::downgrade(&inner);
        let allow_unknown = inner.cfg.allow_unknown_sources;
        let policy = AcceptPolicy {
            ae_titles: inner.cfg.ae_titles.clone(),
            calling_filter: Some(Arc::new(move |ae| {
                allow_unknown
                    || filter_inner
                        .upgrade()
                        .is_some_and(|i| i.rules.snapshot().rules().sources.iter().any(|s| s.calling_ae == *ae))
            })),
            ..AcceptPolicy::default()
        };
        let scp_cfg = ScpConfig {
            bind: inner.cfg.bind_address(),
            policy,
            idle_timeout: crate::dimse::IDLE_TIMEOUT,
        };
        let scp = scp_serve(scp_cfg, Arc::new(Handler(inner.clone()))).map_err(|e| Error::BindFailed(e.to_string()))?;

        let mut threads = Vec::new();
        let tick = (inner.cfg.study_idle.min(inner.cfg.ai_timeout) / 4).clamp(Duration::from_millis(5), Duration::from_millis(250));
        let monitor = inner.clone();
        threads.push(
            std::thread::Builder::new()
                .name("study-monitor".into())
                .spawn(move || {
                    while !monitor.stop.load(Ordering::SeqCst) {
                        std::thread::sleep(tick);
                        monitor.sweep();
                    }
                })?,
        );

        let mut admin_addr = None;
        if let Some(port) = inner.cfg.admin_port {
            let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| Error::BindFailed(format!("admin port {port}: {e}")))?;
            listener.set_nonblocking(true)?;
            admin_addr = Some(listener.local_addr()?);
            let admin = inner.clone();
            threads.push(std::thread::Builder::new().name("admin".into()).spawn(move || serve_admin(&admin, listener))?);
        }
        log::info!("gateway listening on {}", scp.local_addr());
        Ok(Gateway {
            inner,
            scp: Some(scp),
            threads,
            admin_addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.scp.as_ref().expect("running").local_addr()
    }

    pub fn port(&self) -> u16 {
        self.local_addr().port()
    }

    pub fn admin_addr(&self) -> Option<SocketAddr> {
        self.admin_addr
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.inner.cfg
    }

    pub fn ruleset_version(&self) -> u64 {
        self.inner.rules.version()
    }

    /// Re-reads the rules file and installs it as the next version.
    pub fn reload(&self) -> Result<u64, Error> {
        self.inner.reload()
    }

    /// Routes one instance as if it had arrived over an association.
    pub fn handle_inbound_instance(&self, meta: &AssociationMeta, file: DicomFile) -> u16 {
        self.inner.handle_inbound(meta, file)
    }

    pub fn record(&self, study_uid: &str) -> Option<StudyRecord> {
        lock(&self.inner.records).get(study_uid).cloned()
    }

    pub fn records(&self) -> Vec<StudyRecord> {
        lock(&self.inner.records).values().cloned().collect()
    }

    /// Applies `event` to a study's record; an illegal event is audited and
    /// leaves the record as it was. `None` when the study is unknown.
    pub fn transition(&self, study_uid: &str, event: StudyEvent) -> Option<StudyState> {
        let mut records = lock(&self.inner.records);
        let rec = records.get_mut(study_uid)?;
        self.inner.transition(rec, event);
        Some(rec.state)
    }

    pub fn audit_query(&self, filter: &AuditFilter) -> Vec<AuditEvent> {
        self.inner.audit.query(filter)
    }

    pub fn audit_path(&self) -> &Path {
        self.inner.audit.path()
    }

    /// Blocks until no delivery or HL7 send is outstanding.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut w = lock(&self.inner.work);
        while *w > 0 {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return false;
            }
            w = self.inner.idle.wait_timeout(w, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        true
    }

    /// Blocks until the study reaches `state`, returning its record.
    pub fn wait_for_state(&self, study_uid: &str, state: StudyState, timeout: Duration) -> Option<StudyRecord> {
        let deadline = Instant::now() + timeout;
        let mut records = lock(&self.inner.records);
        loop {
            if let Some(r) = records.get(study_uid).filter(|r| r.state == state) {
                return Some(r.clone());
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return None;
            }
            records = self.inner.changed.wait_timeout(records, left).unwrap_or_else(|p| p.into_inner()).0;
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.inner.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        if let Some(scp) = self.scp.take() {
            scp.shutdown();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        lock(&self.inner.queues).clear();
        let workers: Vec<_> = lock(&self.inner.workers).drain(..).collect();
        for w in workers {
            let _ = w.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_admin(inner: &Arc<Inner>, listener: TcpListener) {
    while !inner.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if let Err(e) = admin_session(inner, stream) {
                    log::debug!("admin session ended: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => log::warn!("admin accept failed: {e}"),
        }
    }
}

/// Line commands: `RELOAD`, `VERSION`, `PING`.
fn admin_session(inner: &Arc<Inner>, stream: TcpStream) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut out = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let reply = match line?.trim().to_ascii_uppercase().as_str() {
            "RELOAD" => match inner.reload() {
                Ok(v) => format!("OK version {v}"),
                Err(e) => format!("ERR {e}"),
            },
            "VERSION" => format!("OK version {}", inner.rules.version()),
            "PING" => "OK".to_string(),
            "" => continue,
            other => format!("ERR unknown command {other:?}"),
        };
        writeln!(out, "{reply}")?;
    }
    Ok(())
}

/// Sends one admin command to a running gateway and returns its reply.
pub fn admin_command(addr: &str, command: &str, timeout: Duration) -> std::io::Result<String> {
    let addrs: Vec<SocketAddr> = std::net::ToSocketAddrs::to_socket_addrs(addr)?.collect();
    let first = addrs
        .first()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("{addr}: no address")))?;
    let mut stream = TcpStream::connect_timeout(first, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    writeln!(stream, "{command}")?;
    let mut reply = String::new();
    BufReader::new(stream).read_line(&mut reply)?;
    Ok(reply.trim_end().to_string())
}
