//! Append-only audit log: one tab-separated line per event, re-read on
//! open so sequence numbers continue across restarts.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::uid::Clock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AuditCategory {
    Received,
    Decision,
    Forwarded,
    Blocked,
    Morphed,
    AiResult,
    Hl7Sent,
    Error,
}

impl AuditCategory {
    pub const ALL: [AuditCategory; 8] = [
        AuditCategory::Received,
        AuditCategory::Decision,
        AuditCategory::Forwarded,
        AuditCategory::Blocked,
        AuditCategory::Morphed,
        AuditCategory::AiResult,
        AuditCategory::Hl7Sent,
        AuditCategory::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditCategory::Received => "received",
            AuditCategory::Decision => "decision",
            AuditCategory::Forwarded => "forwarded",
            AuditCategory::Blocked => "blocked",
            AuditCategory::Morphed => "morphed",
            AuditCategory::AiResult => "ai_result",
            AuditCategory::Hl7Sent => "hl7_sent",
            AuditCategory::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for AuditCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp: String,
    pub study_uid: String,
    pub category: AuditCategory,
    pub detail: String,
    pub ruleset_version: u64,
}

impl AuditEvent {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            self.seq,
            self.timestamp,
            self.category,
            self.study_uid,
            self.ruleset_version,
            escape(&self.detail)
        )
    }

    fn from_line(line: &str) -> Option<Self> {
        let mut parts = line.splitn(6, '\t');
        Some(AuditEvent {
            seq: parts.next()?.parse().ok()?,
            timestamp: parts.next()?.to_string(),
            category: AuditCategory::parse(parts.next()?)?,
            study_uid: parts.next()?.to_string(),
            ruleset_version: parts.next()?.parse().ok()?,
            detail: unescape(parts.next()?),
        })
    }
}

impl fmt::Display for AuditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_line().trim_end_matches('\n'))
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Events matching every given constraint.
#[derive(Clone, Debug, Default)]
pub struct AuditFilter {
    pub study_uid: Option<String>,
    pub category: Option<AuditCategory>,
    pub seq: Option<RangeInclusive<u64>>,
}

impl AuditFilter {
    pub fn study(uid: &str) -> Self {
        AuditFilter {
            study_uid: Some(uid.to_string()),
            ..Default::default()
        }
    }

    pub fn category(c: AuditCategory) -> Self {
        AuditFilter {
            category: Some(c),
            ..Default::default()
        }
    }

    pub fn matches(&self, e: &AuditEvent) -> bool {
        self.study_uid.as_ref().is_none_or(|u| *u == e.study_uid)
            && self.category.is_none_or(|c| c == e.category)
            && self.seq.as_ref().is_none_or(|r| r.contains(&e.seq))
    }
}

/// Reads and filters a log file. A missing file is an empty log; lines
/// that do not parse (a torn final write) are skipped.
pub fn read_audit(path: &Path, filter: &AuditFilter) -> std::io::Result<Vec<AuditEvent>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        if let Some(e) = AuditEvent::from_line(&line?) {
            if filter.matches(&e) {
                out.push(e);
            }
        }
    }
    Ok(out)
}

struct Writer {
    file: File,
    next_seq: u64,
}

/// Writer side. All appends go through one lock, so sequence numbers
/// and line order agree.
pub struct AuditLog {
    path: PathBuf,
    writer: Mutex<Writer>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let last = read_audit(path, &AuditFilter::default())?.last().map_or(0, |e| e.seq);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            writer: Mutex::new(Writer { file, next_seq: last + 1 }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(
        &self,
        clock: &dyn Clock,
        category: AuditCategory,
        study_uid: &str,
        detail: impl Into<String>,
        ruleset_version: u64,
    ) -> AuditEvent {
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let event = AuditEvent {
            seq: w.next_seq,
            timestamp: clock.now().format("%Y-%m-%dT%H:%M:%S%.3f").to_string(),
            study_uid: study_uid.to_string(),
            category,
            detail: detail.into(),
            ruleset_version,
        };
        if let Err(e) = w.file.write_all(event.to_line().as_bytes()) {
            log::error!("audit write failed: {e}");
        }
        w.next_seq += 1;
        event
    }

    pub fn query(&self, filter: &AuditFilter) -> Vec<AuditEvent> {
        // hold the writer lock so a query never sees a half-written line
        let _w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        read_audit(&self.path, filter).unwrap_or_else(|e| {
            log::error!("audit read failed: {e}");
            Vec::new()
        })
    }
}
