//! End-to-end scenarios: sinks, gateway and AI receiver on loopback
//! ports, one synthetic study pushed through, and a report with one line
//! per check.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::conf::{parse_sections, ConfError, Section};
use crate::dicom::{sop, DicomFile};
use crate::dimse::AeTitle;
use crate::gateway::{AuditCategory, AuditFilter, Gateway, GatewayConfig, StudyState};
use crate::hl7::{parse_message, Hl7Message};
use crate::map::{parse_graph, RunConfig, STANDARD_GRAPH};
use crate::sr::{read_finding, Detection};

use super::ai::{AiReceiver, AiReceiverConfig};
use super::mllp_sink::{run_mllp_sink, AckMode};
use super::send::cli_modality_send;
use super::sink::{run_store_sink, SinkScript};
use super::{gen_synthetic_study, BrightBlock, Error, SeriesSpec, SyntheticStudySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// A study with a bright block: positive finding, one priority message.
    Bright,
    /// An all-zero study: negative finding, no message.
    Zero,
    /// The AI receiver never answers; the study must fail on timeout.
    AiDown,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bright" => Some(ScenarioKind::Bright),
            "zero" => Some(ScenarioKind::Zero),
            "ai_down" => Some(ScenarioKind::AiDown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Bright => "bright",
            ScenarioKind::Zero => "zero",
            ScenarioKind::AiDown => "ai_down",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub slices: usize,
    pub rows: usize,
    pub cols: usize,
    pub study_idle: Duration,
    pub ai_inactivity: Duration,
    pub ai_timeout: Duration,
    /// Longest wait for the study to settle.
    pub deadline: Duration,
    pub strict_layout: bool,
}

impl Scenario {
    pub fn new(name: &str, kind: ScenarioKind) -> Self {
        Scenario {
            name: name.to_string(),
            kind,
            seed: 42,
            slices: 3,
            rows: 10,
            cols: 10,
            study_idle: Duration::from_millis(300),
            ai_inactivity: Duration::from_millis(300),
            ai_timeout: match kind {
                ScenarioKind::AiDown => Duration::from_millis(1500),
                _ => Duration::from_secs(20),
            },
            deadline: Duration::from_secs(25),
            strict_layout: false,
        }
    }

    fn from_section(s: &Section) -> Result<Self, ConfError> {
        s.check_keys(&[
            "kind",
            "seed",
            "slices",
            "rows",
            "cols",
            "study_idle_ms",
            "ai_inactivity_ms",
            "ai_timeout_s",
            "deadline_s",
            "strict_layout",
        ])?;
        let name = s.name_or_err()?;
        let k = s.require("kind")?;
        let kind = ScenarioKind::parse(&k.value).ok_or_else(|| k.error("kind must be bright, zero or ai_down"))?;
        let mut sc = Scenario::new(name, kind);
        if let Some(e) = s.get("seed")? {
            sc.seed = e.parse()?;
        }
        for (key, slot, min, max) in [
            ("slices", &mut sc.slices, 1, 512),
            ("rows", &mut sc.rows, 6, 512),
            ("cols", &mut sc.cols, 6, 512),
        ] {
            if let Some(e) = s.get(key)? {
                let v: usize = e.parse()?;
                if !(min..=max).contains(&v) {
                    return Err(e.error(format!("{key} must be in {min}..={max}")));
                }
                *slot = v;
            }
        }
        for (key, slot) in [("study_idle_ms", &mut sc.study_idle), ("ai_inactivity_ms", &mut sc.ai_inactivity)] {
            if let Some(e) = s.get(key)? {
                *slot = Duration::from_millis(e.parse()?);
            }
        }
        for (key, slot) in [("ai_timeout_s", &mut sc.ai_timeout), ("deadline_s", &mut sc.deadline)] {
            if let Some(e) = s.get(key)? {
                let v: f64 = e.parse()?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(e.error(format!("{key} must be positive")));
                }
                *slot = Duration::from_secs_f64(v);
            }
        }
        if let Some(e) = s.get("strict_layout")? {
            sc.strict_layout = e.bool()?;
        }
        Ok(sc)
    }

    /// Smallest block that covers 2% of a slice, starting at row 2,
    /// column 5 of the middle slice.
    fn bright_block(&self) -> BrightBlock {
        let need = (self.rows * self.cols).div_ceil(50).max(2);
        let height = need.min(self.rows - 2);
        let width = need.div_ceil(height).min(self.cols - 5);
        BrightBlock {
            z: self.slices / 2,
            y: 2,
            x: 5,
            depth: 1,
            height,
            width,
            value: 1000,
        }
    }

    pub fn study_spec(&self) -> SyntheticStudySpec {
        let mut series = SeriesSpec::new(self.slices, self.rows, self.cols, 3.0);
        if self.kind != ScenarioKind::Zero {
            series = series.with_bright(self.bright_block());
        }
        SyntheticStudySpec::chest_ct(self.seed, vec![series])
    }
}

/// Reads `[scenario NAME]` sections.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, ConfError> {
    let sections = parse_sections(text)?;
    let mut out = Vec::new();
    for s in &sections {
        if s.kind != "scenario" {
            return Err(s.error(format!("unknown section kind {:?}", s.kind)));
        }
        out.push(Scenario::from_section(s)?);
    }
    if out.is_empty() {
        return Err(ConfError::new(1, 1, "no [scenario] sections"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub scenario: String,
    pub assertions: Vec<Assertion>,
    pub wall: Duration,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        !self.assertions.is_empty() && self.assertions.iter().all(|a| a.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn failures(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.assertions {
            writeln!(f, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail)?;
        }
        let ok = self.assertions.iter().filter(|a| a.passed).count();
        write!(
            f,
            "scenario {}: {} ({ok}/{} checks) in {:.2} s",
            self.scenario,
            if self.passed() { "PASS" } else { "FAIL" },
            self.assertions.len(),
            self.wall.as_secs_f64()
        )
    }
}

fn ae(s: &str) -> AeTitle {
    AeTitle::new(s).expect("valid constant AE title")
}

/// A loopback port nobody listens on.
fn closed_port() -> Result<u16, Error> {
    let l = std::net::TcpListener::bind("127.0.0.1:0")?;
    Ok(l.local_addr()?.port())
}

fn gateway_conf(sc: &Scenario, pacs: u16, viewer: u16, ai: u16, mllp: u16) -> String {
    format!(
        "\
[source modality]
calling_ae = MODALITY

[source ai]
calling_ae = AIRECV
kind = ai

[destination pacs]
host = 127.0.0.1
port = {pacs}
called_ae = PACS

[destination viewer]
host = 127.0.0.1
port = {viewer}
called_ae = VIEWER

[destination ai]
host = 127.0.0.1
port = {ai}
called_ae = AIRECV

[rule ct_to_ai]
when = modality == \"CT\"
route = pacs, ai : parallel

[rule archive]
when = true
route = pacs : parallel

[gateway]
listen_port = 0
ae_title = FLOWGATE
viewer_dests = viewer
ai_dests = ai
hl7_host = 127.0.0.1
hl7_port = {mllp}
hl7_strict_layout = {}
ai_timeout_s = {}
study_idle_ms = {}
retry_backoff_ms = 50
quarantine_dir = quarantine
dead_letter_dir = dead_letter
audit_log = audit.log
seed = {}
",
        sc.strict_layout,
        sc.ai_timeout.as_secs_f64(),
        sc.study_idle.as_millis(),
        sc.seed
    )
}

fn detection_row(msg: &Hl7Message) -> Option<String> {
    msg.segments_named("OBX")
        .find(|s| s.field(3).is_some_and(|f| f.display(&msg.delimiters).starts_with("AI_DETECTION_")))
        .and_then(|s| s.field(5).map(|f| f.display(&msg.delimiters)))
}

/// Runs one scenario under `work_dir`. Setup failures are errors; every
/// check after the study is sent lands in the report.
pub fn run_scenario(sc: &Scenario, work_dir: &Path) -> Result<ScenarioReport, Error> {
    let started = Instant::now();
    let mut report = ScenarioReport {
        scenario: sc.name.clone(),
        assertions: Vec::new(),
        wall: Duration::ZERO,
    };
    std::fs::create_dir_all(work_dir)?;
    let pacs = run_store_sink("127.0.0.1:0", ae("PACS"), &work_dir.join("pacs"), SinkScript::default())?;
    let viewer = run_store_sink("127.0.0.1:0", ae("VIEWER"), &work_dir.join("viewer"), SinkScript::default())?;
    let mllp = run_mllp_sink("127.0.0.1:0", AckMode::Accept, &work_dir.join("interface"))?;
    let ai = match sc.kind {
        ScenarioKind::AiDown => None,
        _ => Some(AiReceiver::start(AiReceiverConfig {
            bind: "127.0.0.1:0".into(),
            ae_title: ae("AIRECV"),
            work_dir: work_dir.join("ai"),
            graph: parse_graph(STANDARD_GRAPH).expect("standard graph parses"),
            run: RunConfig {
                seed: Some(sc.seed),
                ..RunConfig::default()
            },
            inactivity: sc.ai_inactivity,
            return_to: None,
        })?),
    };
    let ai_port = match &ai {
        Some(a) => a.port(),
        None => closed_port()?,
    };

    let conf_path = work_dir.join("gateway.conf");
    std::fs::write(&conf_path, gateway_conf(sc, pacs.port(), viewer.port(), ai_port, mllp.port()))?;
    let cfg = GatewayConfig::load(&conf_path).map_err(|e| Error::InvariantViolation(e.to_string()))?;
    let gateway = Gateway::start(cfg).map_err(|e| Error::InvariantViolation(e.to_string()))?;
    let gw_endpoint = format!("127.0.0.1:{}", gateway.port());
    if let Some(a) = &ai {
        a.set_return_to(&gw_endpoint, ae("FLOWGATE"));
    }

    let study_dir = work_dir.join("study");
    let paths = gen_synthetic_study(&sc.study_spec(), &study_dir)?;
    let sent: Vec<String> = paths
        .iter()
        .map(|p| DicomFile::read(p).map(|f| f.sop_instance_uid().unwrap_or_default().to_string()))
        .collect::<Result<_, _>>()?;
    let study_uid = DicomFile::read(&paths[0])?
        .dataset
        .get_string(crate::dicom::tags::STUDY_INSTANCE_UID)
        .unwrap_or_default();
    match cli_modality_send(&study_dir, &gw_endpoint, &ae("MODALITY"), &ae("FLOWGATE")) {
        Ok(summary) => report.check("modality send", summary.all_succeeded(), summary.to_string()),
        Err(e) => report.check("modality send", false, e.to_string()),
    }

    let target = match sc.kind {
        ScenarioKind::Bright => StudyState::Hl7Sent,
        ScenarioKind::Zero => StudyState::ResultsDistributed,
        ScenarioKind::AiDown => StudyState::Failed,
    };
    let reached = gateway.wait_for_state(&study_uid, target, sc.deadline);
    gateway.wait_idle(Duration::from_secs(10));
    let record = gateway.record(&study_uid);
    report.check(
        &format!("study reached {target}"),
        reached.is_some(),
        match &record {
            Some(r) => format!("state {}", r.state),
            None => "no study record".into(),
        },
    );

    let mut stored: Vec<String> = pacs.entries().into_iter().map(|e| e.sop_instance_uid).collect();
    stored.sort();
    let mut expected = sent.clone();
    expected.sort();
    report.check(
        "pacs holds every instance once",
        stored == expected,
        format!("{} of {} instances, {} manifest entries", expected.iter().filter(|s| stored.contains(s)).count(), expected.len(), stored.len()),
    );

    let viewer_files: Vec<DicomFile> = viewer
        .entries()
        .iter()
        .filter_map(|e| viewer.read_stored(&e.sop_instance_uid).ok())
        .collect();
    let srs: Vec<&DicomFile> = viewer_files.iter().filter(|f| f.sop_class_uid().is_some_and(sop::is_sr)).collect();
    let messages: Vec<Vec<u8>> = mllp.messages();
    let events = gateway.audit_query(&AuditFilter::study(&study_uid));
    let count = |c: AuditCategory| events.iter().filter(|e| e.category == c).count();
    let n = sent.len();

    match sc.kind {
        ScenarioKind::Bright | ScenarioKind::Zero => {
            let want = if sc.kind == ScenarioKind::Bright { Detection::Pos } else { Detection::Neg };
            report.check("viewer received the SR", srs.len() == 1, format!("{} SR object(s) at viewer", srs.len()));
            let finding = srs.first().map(|f| read_finding(f));
            report.check(
                &format!("SR detection is {}", want.as_str()),
                matches!(&finding, Some(Ok(r)) if r.detection == want),
                match &finding {
                    Some(Ok(r)) => format!("{} certainty {} priority {}", r.detection.as_str(), r.certainty, r.priority.as_str()),
                    Some(Err(e)) => e.to_string(),
                    None => "no SR".into(),
                },
            );
        }
        ScenarioKind::AiDown => {
            report.check("viewer received nothing", viewer_files.is_empty(), format!("{} object(s) at viewer", viewer_files.len()));
            let timeout_logged = events
                .iter()
                .any(|e| e.category == AuditCategory::Error && e.detail.starts_with("no AI result"));
            report.check("audit records the AI timeout", timeout_logged, format!("{} error event(s)", count(AuditCategory::Error)));
            let waited = record.as_ref().and_then(|r| {
                let at = |s: StudyState| r.history.iter().find(|h| h.0 == s).map(|h| h.1);
                (at(StudyState::Failed)? - at(StudyState::AiPending)?).to_std().ok()
            });
            // history timestamps have millisecond resolution
            let floor = sc.ai_timeout.saturating_sub(Duration::from_millis(5));
            report.check(
                "failure waited for the AI timeout",
                waited.is_some_and(|w| w >= floor),
                match waited {
                    Some(w) => format!("AI_PENDING to FAILED took {:.2} s (timeout {:.2} s)", w.as_secs_f64(), sc.ai_timeout.as_secs_f64()),
                    None => "no AI_PENDING to FAILED path".into(),
                },
            );
        }
    }

    match sc.kind {
        ScenarioKind::Bright => {
            report.check("one ORM at interface engine", messages.len() == 1, format!("{} message(s)", messages.len()));
            let detection = messages.first().and_then(|m| parse_message(m).ok()).and_then(|m| detection_row(&m));
            let raw_row = messages
                .first()
                .is_some_and(|m| String::from_utf8_lossy(m).split('\r').any(|l| l.ends_with("|AI_DETECTION_MONAI||POS")));
            report.check(
                "ORM carries AI_DETECTION_MONAI||POS",
                detection.as_deref() == Some("POS") && raw_row,
                format!("detection {:?}", detection.unwrap_or_default()),
            );
            let path: Vec<StudyState> = record.as_ref().map(|r| r.history.iter().map(|h| h.0).collect()).unwrap_or_default();
            use StudyState::*;
            report.check(
                "lifecycle followed the full path",
                path == [Receiving, Forwarded, AiPending, AiComplete, ResultsDistributed, Hl7Sent],
                path.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" > "),
            );
        }
        ScenarioKind::Zero | ScenarioKind::AiDown => {
            report.check("no HL7 message", messages.is_empty(), format!("{} message(s)", messages.len()));
        }
    }

    let (received, decisions, forwarded) = (count(AuditCategory::Received), count(AuditCategory::Decision), count(AuditCategory::Forwarded));
    let (min_forwards, results, hl7) = match sc.kind {
        ScenarioKind::Bright => (n + n + 1, 1, 1),
        ScenarioKind::Zero => (n + n + 1, 1, 0),
        ScenarioKind::AiDown => (n, 0, 0),
    };
    let audit_ok = received == n
        && decisions == n
        && forwarded == min_forwards
        && count(AuditCategory::AiResult) == results
        && count(AuditCategory::Hl7Sent) == hl7
        && (sc.kind == ScenarioKind::AiDown || count(AuditCategory::Error) == 0);
    report.check(
        "audit trail complete",
        audit_ok,
        format!(
            "received {received}, decision {decisions}, forwarded {forwarded}, ai_result {}, hl7_sent {}, error {}",
            count(AuditCategory::AiResult),
            count(AuditCategory::Hl7Sent),
            count(AuditCategory::Error)
        ),
    );

    gateway.shutdown();
    if let Some(a) = ai {
        a.shutdown();
    }
    mllp.shutdown();
    pacs.shutdown();
    viewer.shutdown();
    report.wall = started.elapsed();
    Ok(report)
}
