//! Study lifecycle: the allowed state edges and the per-study record.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use chrono::NaiveDateTime;

use crate::rules::Priority;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StudyState {
    Receiving,
    Forwarded,
    AiPending,
    AiComplete,
    ResultsDistributed,
    Hl7Sent,
    Failed,
}

impl StudyState {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyState::Receiving => "RECEIVING",
            StudyState::Forwarded => "FORWARDED",
            StudyState::AiPending => "AI_PENDING",
            StudyState::AiComplete => "AI_COMPLETE",
            StudyState::ResultsDistributed => "RESULTS_DISTRIBUTED",
            StudyState::Hl7Sent => "HL7_SENT",
            StudyState::Failed => "FAILED",
        }
    }
}

impl fmt::Display for StudyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StudyEvent {
    InstanceReceived,
    /// The inactivity window passed with every delivery settled.
    StudyComplete,
    AiRouted,
    AiResult,
    ResultsDistributed,
    Hl7Sent,
    AiTimeout,
    Fail(String),
}

impl fmt::Display for StudyEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyEvent::InstanceReceived => f.write_str("instance_received"),
            StudyEvent::StudyComplete => f.write_str("study_complete"),
            StudyEvent::AiRouted => f.write_str("ai_routed"),
            StudyEvent::AiResult => f.write_str("ai_result"),
            StudyEvent::ResultsDistributed => f.write_str("results_distributed"),
            StudyEvent::Hl7Sent => f.write_str("hl7_sent"),
            StudyEvent::AiTimeout => f.write_str("ai_timeout"),
            StudyEvent::Fail(why) => write!(f, "fail ({why})"),
        }
    }
}

/// The state `event` leads to from `state`, or `None` when the edge is not
/// allowed. Receiving more instances keeps a study in RECEIVING.
pub fn next_state(state: StudyState, event: &StudyEvent) -> Option<StudyState> {
    use StudyEvent as E;
    use StudyState as S;
    match (state, event) {
        (S::Receiving, E::InstanceReceived) => Some(S::Receiving),
        (S::Receiving, E::StudyComplete) => Some(S::Forwarded),
        (S::Forwarded, E::AiRouted) => Some(S::AiPending),
        (S::AiPending, E::AiResult) => Some(S::AiComplete),
        (S::AiComplete, E::ResultsDistributed) => Some(S::ResultsDistributed),
        (S::ResultsDistributed, E::Hl7Sent) => Some(S::Hl7Sent),
        (S::AiPending, E::AiTimeout) => Some(S::Failed),
        (S::Failed, E::Fail(_)) => None,
        (_, E::Fail(_)) => Some(S::Failed),
        _ => None,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeliveryLedger {
    pub queued: u64,
    pub delivered: u64,
    pub retries: u64,
    pub dead_lettered: u64,
    pub last_status: Option<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IllegalTransition {
    pub state: StudyState,
    pub event: StudyEvent,
}

impl fmt::Display for IllegalTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} not allowed in {}", self.event, self.state)
    }
}

#[derive(Clone, Debug)]
pub struct StudyRecord {
    pub study_uid: String,
    pub accession: String,
    pub source_ae: String,
    pub state: StudyState,
    /// Each state entered, with when.
    pub history: Vec<(StudyState, NaiveDateTime)>,
    pub deliveries: BTreeMap<String, DeliveryLedger>,
    pub priority: Option<Priority>,
    pub ai_routed: bool,
    pub instances: u64,
    pub(crate) pending: u64,
    pub(crate) last_activity: Instant,
    pub(crate) state_since: Instant,
}

impl StudyRecord {
    pub fn new(study_uid: &str, accession: &str, source_ae: &str, now: NaiveDateTime) -> Self {
        StudyRecord {
            study_uid: study_uid.to_string(),
            accession: accession.to_string(),
            source_ae: source_ae.to_string(),
            state: StudyState::Receiving,
            history: vec![(StudyState::Receiving, now)],
            deliveries: BTreeMap::new(),
            priority: None,
            ai_routed: false,
            instances: 0,
            pending: 0,
            last_activity: Instant::now(),
            state_since: Instant::now(),
        }
    }

    /// Applies `event`; an illegal one leaves the record untouched.
    pub fn apply(&mut self, event: &StudyEvent, now: NaiveDateTime) -> Result<StudyState, IllegalTransition> {
        let next = next_state(self.state, event).ok_or_else(|| IllegalTransition {
            state: self.state,
            event: event.clone(),
        })?;
        if next != self.state {
            self.state = next;
            self.history.push((next, now));
            self.state_since = Instant::now();
        }
        Ok(next)
    }

    /// Deliveries still queued or in flight for this study.
    pub fn pending_deliveries(&self) -> u64 {
        self.pending
    }

    pub fn ledger(&self, destination: &str) -> Option<&DeliveryLedger> {
        self.deliveries.get(destination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uid::{Clock, SteppingClock};

    #[test]
    fn happy_path() {
        let c = SteppingClock::default_start();
        let mut r = StudyRecord::new("1", "A", "CT", c.now());
        for e in [
            StudyEvent::InstanceReceived,
            StudyEvent::StudyComplete,
            StudyEvent::AiRouted,
            StudyEvent::AiResult,
            StudyEvent::ResultsDistributed,
            StudyEvent::Hl7Sent,
        ] {
            r.apply(&e, c.now()).unwrap();
        }
        let states: Vec<StudyState> = r.history.iter().map(|h| h.0).collect();
        use StudyState::*;
        assert_eq!(states, vec![Receiving, Forwarded, AiPending, AiComplete, ResultsDistributed, Hl7Sent]);
    }

    #[test]
    fn illegal_events_leave_the_record() {
        let c = SteppingClock::default_start();
        let mut r = StudyRecord::new("1", "A", "CT", c.now());
        r.state = StudyState::Hl7Sent;
        let before = r.history.len();
        assert!(r.apply(&StudyEvent::InstanceReceived, c.now()).is_err());
        assert_eq!((r.state, r.history.len()), (StudyState::Hl7Sent, before));
        assert_eq!(next_state(StudyState::Forwarded, &StudyEvent::AiRouted), Some(StudyState::AiPending));
        assert_eq!(next_state(StudyState::AiPending, &StudyEvent::AiTimeout), Some(StudyState::Failed));
        assert_eq!(next_state(StudyState::Forwarded, &StudyEvent::AiTimeout), None);
        assert_eq!(next_state(StudyState::Receiving, &StudyEvent::AiResult), None);
        assert_eq!(next_state(StudyState::Failed, &StudyEvent::Fail("x".into())), None);
        assert_eq!(next_state(StudyState::Hl7Sent, &StudyEvent::Fail("x".into())), Some(StudyState::Failed));
    }
}
