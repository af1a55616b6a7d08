//! Gateway configuration: the rules grammar plus one `[gateway]` section.
//!
//! ```text
//! [gateway]
//! listen_port = 11112
//! ae_title = FLOWGATE
//! viewer_dests = viewer
//! ai_dests = ai
//! hl7_host = 127.0.0.1
//! hl7_port = 2575
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::conf::{parse_sections, ConfError, Entry, Section};
use crate::dimse::AeTitle;
use crate::hl7::Layout;
use crate::rules::{rules_from_sections, Priority, RuleSet};
use crate::sr::{parse_mapping_template, MappingTemplate, STANDARD_TEMPLATE};

use super::Error;

const KEYS: &[&str] = &[
    "listen_address",
    "listen_port",
    "ae_title",
    "allow_unknown_sources",
    "rules",
    "template",
    "viewer_dests",
    "ai_dests",
    "hl7_host",
    "hl7_port",
    "hl7_strict_layout",
    "hl7_timeout_ms",
    "hl7_sending_app",
    "hl7_receiving_app",
    "hl7_processing_id",
    "hl7_version",
    "hl7_assigning_authority",
    "hl7_image_id",
    "priority_threshold",
    "retry_max",
    "retry_backoff_ms",
    "retry_multiplier",
    "ai_timeout_s",
    "study_idle_ms",
    "quarantine_dir",
    "dead_letter_dir",
    "audit_log",
    "admin_port",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, first one included.
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Pause before attempt `attempt + 1`, counting from 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_backoff.mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hl7Settings {
    pub endpoint: Option<String>,
    pub layout: Layout,
    pub timeout: Duration,
    pub sending_app: String,
    pub receiving_app: String,
    pub processing_id: String,
    pub version: String,
    pub assigning_authority: String,
    pub image_id: String,
}

impl Default for Hl7Settings {
    fn default() -> Self {
        Hl7Settings {
            endpoint: None,
            layout: Layout::FigureFaithful,
            timeout: Duration::from_secs(5),
            sending_app: "FLOWGATE".into(),
            receiving_app: "HIS".into(),
            processing_id: "T".into(),
            version: "2.5.1".into(),
            assigning_authority: "MC".into(),
            image_id: "IMAGEID".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GatewayConfig {
    pub listen_address: String,
    pub listen_port: u16,
    pub ae_titles: Vec<AeTitle>,
    pub allow_unknown_sources: bool,
    /// File the rules are read from, at start and on every reload.
    pub rules_path: Option<PathBuf>,
    pub rules: RuleSet,
    pub template: MappingTemplate,
    pub viewer_dests: Vec<String>,
    pub ai_dests: Vec<String>,
    pub hl7: Hl7Settings,
    /// Lowest extracted priority that triggers an HL7 message.
    pub priority_threshold: Priority,
    pub retry: RetryPolicy,
    pub ai_timeout: Duration,
    pub study_idle: Duration,
    pub quarantine_dir: PathBuf,
    pub dead_letter_dir: PathBuf,
    pub audit_log: PathBuf,
    pub admin_port: Option<u16>,
    pub seed: Option<u64>,
}

impl GatewayConfig {
    /// Defaults around an in-memory rule set, with state kept under `dir`.
    pub fn new(rules: RuleSet, dir: &Path) -> Self {
        GatewayConfig {
            listen_address: "127.0.0.1".into(),
            listen_port: 0,
            ae_titles: vec![AeTitle::new("FLOWGATE").expect("valid constant AE title")],
            allow_unknown_sources: false,
            rules_path: None,
            rules,
            template: parse_mapping_template(STANDARD_TEMPLATE).expect("standard template parses"),
            viewer_dests: Vec::new(),
            ai_dests: Vec::new(),
            hl7: Hl7Settings::default(),
            priority_threshold: Priority::High,
            retry: RetryPolicy::default(),
            ai_timeout: Duration::from_secs(300),
            study_idle: Duration::from_secs(5),
            quarantine_dir: dir.join("quarantine"),
            dead_letter_dir: dir.join("dead_letter"),
            audit_log: dir.join("audit.log"),
            admin_port: None,
            seed: None,
        }
    }

    pub fn bind_address(&self) -> String {
        format!("{}:{}", self.listen_address, self.listen_port)
    }

    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self, Error> {
        let invalid = |e: ConfError| Error::config(origin, e.line, e.message);
        let sections = parse_sections(text).map_err(invalid)?;
        let gw = gateway_section(&sections).ok_or_else(|| Error::config(origin, 0, "no [gateway] section"))?;
        gw.check_keys(KEYS).map_err(invalid)?;
        let mut cfg = GatewayConfig::new(RuleSet::empty(1), base);
        let resolve = |e: &Entry| base.join(&e.value);

        let rules_path = gw.get("rules").map_err(invalid)?.map(resolve);
        cfg.rules = match &rules_path {
            Some(p) => load_rules(p)?,
            None => rules_from_sections(&sections, &["gateway"]).map_err(|e| Error::from_rules(origin, e))?,
        };
        cfg.rules_path = Some(rules_path.unwrap_or_else(|| origin.to_path_buf()));

        let get = |k: &'static str| gw.get(k).map_err(invalid);
        if let Some(e) = get("listen_address")? {
            cfg.listen_address = e.value.clone();
        }
        cfg.listen_port = gw.require("listen_port").map_err(invalid)?.parse().map_err(invalid)?;
        if let Some(e) = get("ae_title")? {
            cfg.ae_titles = e
                .list()
                .iter()
                .map(|t| AeTitle::new(t).map_err(|err| Error::config(origin, e.line, err.to_string())))
                .collect::<Result<_, _>>()?;
            if cfg.ae_titles.is_empty() {
                return Err(Error::config(origin, e.line, "ae_title is empty"));
            }
        }
        if let Some(e) = get("allow_unknown_sources")? {
            cfg.allow_unknown_sources = e.bool().map_err(invalid)?;
        }
        if let Some(e) = get("template")? {
            let path = resolve(e);
            let text = std::fs::read_to_string(&path)
                .map_err(|err| Error::config(origin, e.line, format!("{}: {err}", path.display())))?;
            cfg.template = parse_mapping_template(&text).map_err(|err| Error::config(&path, template_line(&err), err.to_string()))?;
        }
        for (key, list) in [("viewer_dests", &mut cfg.viewer_dests), ("ai_dests", &mut cfg.ai_dests)] {
            if let Some(e) = get(key)? {
                *list = e.list();
                if let Some(missing) = list.iter().find(|d| cfg.rules.destination(d).is_none()) {
                    return Err(Error::config(origin, e.line, format!("{key} names unknown destination {missing:?}")));
                }
            }
        }

        let host = get("hl7_host")?;
        let port = get("hl7_port")?;
        match (host, port) {
            (Some(h), Some(p)) => {
                let port: u16 = p.parse().map_err(invalid)?;
                cfg.hl7.endpoint = Some(format!("{}:{port}", h.value));
            }
            (None, None) => {}
            (Some(e), None) | (None, Some(e)) => return Err(Error::config(origin, e.line, "hl7_host and hl7_port go together")),
        }
        if let Some(e) = get("hl7_strict_layout")? {
            cfg.hl7.layout = if e.bool().map_err(invalid)? { Layout::Strict } else { Layout::FigureFaithful };
        }
        if let Some(e) = get("hl7_timeout_ms")? {
            cfg.hl7.timeout = Duration::from_millis(e.parse().map_err(invalid)?);
        }
        for (key, slot) in [
            ("hl7_sending_app", &mut cfg.hl7.sending_app),
            ("hl7_receiving_app", &mut cfg.hl7.receiving_app),
            ("hl7_processing_id", &mut cfg.hl7.processing_id),
            ("hl7_version", &mut cfg.hl7.version),
            ("hl7_assigning_authority", &mut cfg.hl7.assigning_authority),
            ("hl7_image_id", &mut cfg.hl7.image_id),
        ] {
            if let Some(e) = get(key)? {
                *slot = e.value.clone();
            }
        }
        if let Some(e) = get("priority_threshold")? {
            cfg.priority_threshold = e.parse().map_err(invalid)?;
        }
        if let Some(e) = get("retry_max")? {
            cfg.retry.max_attempts = e.parse().map_err(invalid)?;
            if cfg.retry.max_attempts == 0 {
                return Err(Error::config(origin, e.line, "retry_max must be at least 1"));
            }
        }
        if let Some(e) = get("retry_backoff_ms")? {
            cfg.retry.base_backoff = Duration::from_millis(e.parse().map_err(invalid)?);
        }
        if let Some(e) = get("retry_multiplier")? {
            cfg.retry.multiplier = positive(e, origin)?;
        }
        if let Some(e) = get("ai_timeout_s")? {
            cfg.ai_timeout = Duration::from_secs_f64(positive(e, origin)?);
        }
        if let Some(e) = get("study_idle_ms")? {
            cfg.study_idle = Duration::from_millis(e.parse().map_err(invalid)?);
        }
        for (key, slot) in [
            ("quarantine_dir", &mut cfg.quarantine_dir),
            ("dead_letter_dir", &mut cfg.dead_letter_dir),
            ("audit_log", &mut cfg.audit_log),
        ] {
            if let Some(e) = get(key)? {
                *slot = resolve(e);
            }
        }
        if let Some(e) = get("admin_port")? {
            cfg.admin_port = Some(e.parse().map_err(invalid)?);
        }
        if let Some(e) = get("seed")? {
            cfg.seed = Some(e.parse().map_err(invalid)?);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path, 0, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Checks that every destination named for viewers or AI exists in
    /// `rules`.
    pub fn check_destinations(&self, rules: &RuleSet) -> Result<(), String> {
        match self.viewer_dests.iter().chain(&self.ai_dests).find(|d| rules.destination(d).is_none()) {
            Some(d) => Err(format!("destination {d:?} is referenced by the gateway but not defined")),
            None => Ok(()),
        }
    }
}

fn gateway_section(sections: &[Section]) -> Option<&Section> {
    sections.iter().find(|s| s.kind == "gateway")
}

fn positive(e: &Entry, origin: &Path) -> Result<f64, Error> {
    let v: f64 = e.parse().map_err(|err| Error::config(origin, err.line, err.message))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(origin, e.line, format!("{} must be positive", e.key)));
    }
    Ok(v)
}

fn template_line(e: &crate::sr::Error) -> usize {
    match e {
        crate::sr::Error::Syntax { line, .. } | crate::sr::Error::DuplicateTarget { line, .. } => *line,
        _ => 0,
    }
}

/// Reads a rules file; sections other than rules (such as `[gateway]`)
/// are skipped.
pub fn load_rules(path: &Path) -> Result<RuleSet, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path, 0, e.to_string()))?;
    let sections = parse_sections(&text).map_err(|e| Error::config(path, e.line, e.message))?;
    rules_from_sections(&sections, &["gateway"]).map_err(|e| Error::from_rules(path, e))
}
