use std::path::PathBuf;
use std::time::{Duration, Instant};

use flowgate::dicom::{serialize_dataset, sop, tags, DataSet, DicomFile, Vr, EXPLICIT_VR_LE};
use flowgate::dimse::{scu_store, AeTitle, Error as DimseError, ScuOptions};
use flowgate::gateway::*;
use flowgate::hl7::parse_message;
use flowgate::rules::{apply_morphs, parse_rules, Priority};
use flowgate::sim::{run_mllp_sink, run_store_sink, synthetic_study, AckMode, MllpSink, SeriesSpec, StoreSink, SyntheticStudySpec};
use flowgate::sr::{build_tid1500_sr, BBox, Detection, FindingReport, PatientInfo, StudyInfo};
use flowgate::uid::{SteppingClock, UidSource};

fn ae(s: &str) -> AeTitle {
    s.parse().unwrap()
}

const WAIT: Duration = Duration::from_secs(10);

struct Harness {
    dir: tempfile::TempDir,
    sinks: Vec<(String, StoreSink)>,
    mllp: Option<MllpSink>,
}

impl Harness {
    /// Sinks named after their destination; each entry is (name, script).
    fn new(sinks: &[(&str, &str)], mllp: Option<AckMode>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let sinks = sinks
            .iter()
            .map(|(name, script)| {
                let sink = run_store_sink(
                    "127.0.0.1:0",
                    ae(&name.to_uppercase()),
                    &dir.path().join(name),
                    script.parse().unwrap(),
                )
                .unwrap();
                (name.to_string(), sink)
            })
            .collect();
        let mllp = mllp.map(|m| run_mllp_sink("127.0.0.1:0", m, &dir.path().join("interface")).unwrap());
        Harness { dir, sinks, mllp }
    }

    fn sink(&self, name: &str) -> &StoreSink {
        &self.sinks.iter().find(|(n, _)| n == name).unwrap().1
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    /// Sources, one destination per sink, then `rules` and a `[gateway]`
    /// section with `extra` lines.
    fn config_text(&self, rules: &str, extra: &str) -> String {
        let mut t = String::from(
            "[source modality1]\ncalling_ae = MOD1\n\n[source modality2]\ncalling_ae = MOD2\n\n[source ai]\ncalling_ae = AIRECV\nkind = ai\n\n",
        );
        for (name, sink) in &self.sinks {
            t.push_str(&format!(
                "[destination {name}]\nhost = 127.0.0.1\nport = {}\ncalled_ae = {}\n\n",
                sink.port(),
                name.to_uppercase()
            ));
        }
        t.push_str(rules);
        t.push_str("\n[gateway]\n");
        let mut base = vec![
            "listen_port = 0".to_string(),
            "ae_title = FLOWGATE".into(),
            "retry_backoff_ms = 20".into(),
            "study_idle_ms = 150".into(),
        ];
        if let Some(m) = &self.mllp {
            base.push("hl7_host = 127.0.0.1".into());
            base.push(format!("hl7_port = {}", m.port()));
        }
        let key = |l: &str| l.split('=').next().unwrap_or_default().trim().to_string();
        let overridden: Vec<String> = extra.lines().map(key).collect();
        for l in base.iter().filter(|l| !overridden.contains(&key(l))) {
            t.push_str(l);
            t.push('\n');
        }
        t.push_str(extra);
        t
    }

    fn start(&self, rules: &str, extra: &str) -> Gateway {
        let path = self.path("gateway.conf");
        std::fs::write(&path, self.config_text(rules, extra)).unwrap();
        Gateway::start(GatewayConfig::load(&path).unwrap()).unwrap()
    }
}

fn line_of(text: &str, needle: &str) -> usize {
    text.lines().position(|l| l.contains(needle)).unwrap() + 1
}

fn endpoint(g: &Gateway) -> String {
    format!("127.0.0.1:{}", g.port())
}

fn send(g: &Gateway, calling: &str, files: &[DicomFile]) -> Vec<u16> {
    scu_store(&endpoint(g), &ae(calling), &ae("FLOWGATE"), files, &ScuOptions::default()).unwrap()
}

fn ct_study(seed: u64, count: usize) -> Vec<DicomFile> {
    synthetic_study(&SyntheticStudySpec::chest_ct(seed, vec![SeriesSpec::new(count, 4, 4, 2.5)])).unwrap()
}

fn study_uid(f: &DicomFile) -> String {
    f.dataset.get_string(tags::STUDY_INSTANCE_UID).unwrap()
}

fn count(g: &Gateway, study: &str, c: AuditCategory) -> usize {
    g.audit_query(&AuditFilter::study(study)).iter().filter(|e| e.category == c).count()
}

const FAN_OUT: &str = "[rule ct]\nwhen = modality == \"CT\"\nroute = pacs, ai : parallel\n";

#[test]
fn fan_out_reaches_every_destination() {
    let h = Harness::new(&[("pacs", ""), ("ai", "")], None);
    let g = h.start(FAN_OUT, "ai_dests = ai\n");
    let files = ct_study(1, 2);
    assert_eq!(send(&g, "MOD1", &files), vec![0, 0]);
    assert!(g.wait_idle(WAIT));
    assert_eq!(h.sink("pacs").entries().len(), 2);
    assert_eq!(h.sink("ai").entries().len(), 2);
    let s = study_uid(&files[0]);
    assert_eq!(count(&g, &s, AuditCategory::Received), 2);
    assert_eq!(count(&g, &s, AuditCategory::Decision), 2);
    assert_eq!(count(&g, &s, AuditCategory::Forwarded), 4);
    let rec = g.record(&s).unwrap();
    assert_eq!(rec.ledger("pacs").unwrap().delivered, 2);
    assert!(rec.ai_routed);
    assert_eq!(rec.instances, 2);
}

#[test]
fn blocked_source_is_acknowledged_and_dropped() {
    let h = Harness::new(&[("pacs", "")], None);
    let rules = "[rule block_m2]\nwhen = source == \"modality2\"\nblock = true\n\n[rule all]\nwhen = true\nroute = pacs : parallel\n";
    let g = h.start(rules, "");
    let files = ct_study(2, 1);
    assert_eq!(send(&g, "MOD2", &files), vec![0x0000]);
    assert!(g.wait_idle(WAIT));
    let s = study_uid(&files[0]);
    assert_eq!(count(&g, &s, AuditCategory::Blocked), 1);
    assert_eq!(count(&g, &s, AuditCategory::Forwarded), 0);
    assert!(h.sink("pacs").entries().is_empty());
    assert!(g.record(&s).is_none());

    // the same study from an allowed source goes through
    assert_eq!(send(&g, "MOD1", &files), vec![0x0000]);
    assert!(g.wait_idle(WAIT));
    assert_eq!(h.sink("pacs").entries().len(), 1);
}

#[test]
fn unknown_calling_ae_is_rejected() {
    let h = Harness::new(&[("pacs", "")], None);
    let g = h.start("[rule all]\nwhen = true\nroute = pacs : parallel\n", "");
    let r = scu_store(&endpoint(&g), &ae("STRANGER"), &ae("FLOWGATE"), &ct_study(3, 1), &ScuOptions::default());
    assert!(matches!(r, Err(DimseError::AssociationRejected(_))), "{r:?}");
}

#[test]
fn morph_changes_only_the_morphed_element() {
    let h = Harness::new(&[("pacs", "")], None);
    let rules = "[rule all]\nwhen = true\nroute = pacs : parallel\nmorph = set (0008,0080) LO \"CAII\"\n";
    let g = h.start(rules, "");
    let dir = h.path("source");
    let paths = flowgate::sim::gen_synthetic_study(&SyntheticStudySpec::chest_ct(4, vec![SeriesSpec::new(1, 4, 4, 1.0)]), &dir).unwrap();
    let before = std::fs::read(&paths[0]).unwrap();
    let original = DicomFile::read(&paths[0]).unwrap();
    send(&g, "MOD1", std::slice::from_ref(&original));
    assert!(g.wait_idle(WAIT));

    let stored = h.sink("pacs").read_stored(original.sop_instance_uid().unwrap()).unwrap();
    assert_eq!(stored.dataset.get_string(tags::INSTITUTION_NAME).as_deref(), Some("CAII"));
    let rs = parse_rules(&format!("[destination pacs]\nhost = h\nport = 1\ncalled_ae = P\n{rules}")).unwrap();
    let (expected, _) = apply_morphs(original.dataset.clone(), &rs.rules[0].morphs);
    assert_eq!(
        serialize_dataset(&stored.dataset, EXPLICIT_VR_LE).unwrap(),
        serialize_dataset(&expected, EXPLICIT_VR_LE).unwrap()
    );
    let differing: Vec<_> = original
        .dataset
        .tags()
        .chain(stored.dataset.tags())
        .filter(|t| original.dataset.get(*t) != stored.dataset.get(*t))
        .collect();
    assert_eq!(differing, vec![tags::INSTITUTION_NAME, tags::INSTITUTION_NAME]);
    assert_eq!(std::fs::read(&paths[0]).unwrap(), before);
    assert_eq!(count(&g, &study_uid(&original), AuditCategory::Morphed), 1);
}

fn timed_route(mode: &str) -> (Duration, Gateway, Harness) {
    let h = Harness::new(&[("a", "delay=300"), ("b", "delay=300"), ("c", "delay=300")], None);
    let g = h.start(&format!("[rule all]\nwhen = true\nroute = a, b, c : {mode}\n"), "");
    let files = ct_study(5, 1);
    let t = Instant::now();
    send(&g, "MOD1", &files);
    assert!(g.wait_idle(WAIT));
    (t.elapsed(), g, h)
}

#[test]
fn parallel_route_overlaps_deliveries() {
    let (wall, _g, h) = timed_route("parallel");
    assert!(wall < Duration::from_millis(600), "parallel took {wall:?}");
    for s in ["a", "b", "c"] {
        assert_eq!(h.sink(s).entries().len(), 1);
    }
}

#[test]
fn serial_route_delivers_in_order() {
    let (wall, _g, h) = timed_route("serial");
    assert!(wall >= Duration::from_millis(900), "serial took {wall:?}");
    let at: Vec<String> = ["a", "b", "c"].iter().map(|s| h.sink(s).entries()[0].received.clone()).collect();
    assert!(at[0] <= at[1] && at[1] <= at[2], "{at:?}");
}

#[test]
fn failed_deliveries_are_retried() {
    let h = Harness::new(&[("pacs", "fail_first=2 status=A700")], None);
    let g = h.start("[rule all]\nwhen = true\nroute = pacs : parallel\n", "");
    let files = ct_study(6, 1);
    send(&g, "MOD1", &files);
    assert!(g.wait_idle(WAIT));
    let l = g.record(&study_uid(&files[0])).unwrap().ledger("pacs").cloned().unwrap();
    assert_eq!((l.delivered, l.retries, l.dead_lettered), (1, 2, 0));
    assert_eq!(h.sink("pacs").attempts(), 3);
    assert_eq!(h.sink("pacs").entries().len(), 1);
}

#[test]
fn exhausted_retries_dead_letter_the_instance() {
    let h = Harness::new(&[("pacs", "status=A700")], None);
    let g = h.start("[rule all]\nwhen = true\nroute = pacs : parallel\n", "retry_max = 2\ndead_letter_dir = dl\n");
    let files = ct_study(7, 1);
    send(&g, "MOD1", &files);
    assert!(g.wait_idle(WAIT));
    let sop = files[0].sop_instance_uid().unwrap();
    let dl = h.path("dl").join("pacs");
    assert!(dl.join(format!("{sop}.dcm")).exists());
    let reason = std::fs::read_to_string(dl.join(format!("{sop}.reason"))).unwrap();
    assert!(reason.contains("0xA700"), "{reason}");
    let s = study_uid(&files[0]);
    let l = g.record(&s).unwrap().ledger("pacs").cloned().unwrap();
    assert_eq!((l.delivered, l.retries, l.dead_lettered, l.last_status), (0, 1, 1, Some(0xA700)));
    assert_eq!(count(&g, &s, AuditCategory::Error), 1);
}

fn finding(study: &DicomFile, detection: Detection, priority: Priority) -> FindingReport {
    FindingReport {
        priority,
        detection,
        certainty: 10,
        bbox: (detection == Detection::Pos).then_some(BBox { x0: 1, y0: 1, x1: 3, y1: 3 }),
        evaluation_type: "MONAI".into(),
        accession: study.dataset.get_string(tags::ACCESSION_NUMBER).unwrap(),
        study_uid: study_uid(study),
        patient: PatientInfo {
            id: "12345".into(),
            family: "DOE".into(),
            given: "JANE".into(),
            birth_date: "19700101".into(),
        },
        study: StudyInfo {
            date: "20240101".into(),
            code: "XR1".into(),
            description: "XRAY CHEST".into(),
            short_description: "CHEST".into(),
        },
    }
}

fn sr_for(study: &DicomFile, detection: Detection, priority: Priority) -> DicomFile {
    build_tid1500_sr(&finding(study, detection, priority), &UidSource::seeded(9), &SteppingClock::default_start()).unwrap()
}

fn sc_for(study: &DicomFile) -> DicomFile {
    let uid = UidSource::seeded(10).next_uid();
    let mut ds = DataSet::new();
    ds.set_text(tags::SOP_CLASS_UID, Vr::UI, sop::SECONDARY_CAPTURE);
    ds.set_text(tags::SOP_INSTANCE_UID, Vr::UI, &uid);
    ds.set_text(tags::STUDY_INSTANCE_UID, Vr::UI, &study_uid(study));
    ds.set_text(tags::MODALITY, Vr::CS, "OT");
    DicomFile::new(sop::SECONDARY_CAPTURE, &uid, EXPLICIT_VR_LE, ds)
}

const AI_RULES: &str = "[rule ct]\nwhen = modality == \"CT\"\nroute = pacs, ai : parallel\n";
const AI_EXTRA: &str = "viewer_dests = viewer\nai_dests = ai\n";

#[test]
fn sr_result_reaches_viewer_and_interface_engine() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, AI_EXTRA);
    let files = ct_study(8, 2);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::AiPending, WAIT).is_some());

    let sr = sr_for(&files[0], Detection::Pos, Priority::High);
    assert_eq!(send(&g, "AIRECV", std::slice::from_ref(&sr)), vec![0]);
    let rec = g.wait_for_state(&s, StudyState::Hl7Sent, WAIT).expect("HL7_SENT");
    let path: Vec<StudyState> = rec.history.iter().map(|h| h.0).collect();
    use StudyState::*;
    assert_eq!(path, vec![Receiving, Forwarded, AiPending, AiComplete, ResultsDistributed, Hl7Sent]);

    assert_eq!(h.sink("viewer").entries()[0].sop_instance_uid, sr.sop_instance_uid().unwrap());
    let msgs = h.mllp.as_ref().unwrap().messages();
    assert_eq!(msgs.len(), 1);
    let text = String::from_utf8(msgs[0].clone()).unwrap();
    let lines: Vec<&str> = text.split('\r').collect();
    assert!(lines.contains(&"OBX|1|ST|AI_PRIORITY_MONAI||HIGH"), "{text}");
    assert!(lines.contains(&"OBX|2|ST|AI_DETECTION_MONAI||POS"), "{text}");
    let m = parse_message(&msgs[0]).unwrap();
    assert_eq!(m.value("PID", 3).as_deref(), Some("12345^^^MC^MC"));
    assert_eq!(m.value("OBR", 3).as_deref(), Some(rec.accession.as_str()));

    let cats: Vec<AuditCategory> = g.audit_query(&AuditFilter::study(&s)).iter().map(|e| e.category).collect();
    for c in [AuditCategory::Received, AuditCategory::Decision, AuditCategory::Forwarded, AuditCategory::AiResult, AuditCategory::Hl7Sent] {
        assert!(cats.contains(&c), "missing {c} in {cats:?}");
    }
    assert_eq!(count(&g, &s, AuditCategory::Forwarded), 5);
    assert_eq!(count(&g, &s, AuditCategory::Error), 0);
}

#[test]
fn early_result_settles_the_study_first() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, &format!("{AI_EXTRA}study_idle_ms = 60000\n"));
    let files = ct_study(18, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_idle(WAIT));
    assert_eq!(g.record(&s).unwrap().state, StudyState::Receiving);
    send(&g, "AIRECV", &[sr_for(&files[0], Detection::Pos, Priority::High)]);
    assert!(g.wait_for_state(&s, StudyState::Hl7Sent, WAIT).is_some());
}

#[test]
fn low_priority_sr_sends_no_message() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, AI_EXTRA);
    let files = ct_study(11, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::AiPending, WAIT).is_some());
    send(&g, "AIRECV", &[sr_for(&files[0], Detection::Neg, Priority::Low)]);
    assert!(g.wait_for_state(&s, StudyState::ResultsDistributed, WAIT).is_some());
    assert!(g.wait_idle(WAIT));
    assert!(h.mllp.as_ref().unwrap().messages().is_empty());
    assert_eq!(g.record(&s).unwrap().priority, Some(Priority::Low));
}

#[test]
fn sc_result_is_forwarded_without_hl7() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, AI_EXTRA);
    let files = ct_study(12, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::AiPending, WAIT).is_some());
    let sc = sc_for(&files[0]);
    send(&g, "AIRECV", std::slice::from_ref(&sc));
    assert!(g.wait_for_state(&s, StudyState::ResultsDistributed, WAIT).is_some());
    assert!(g.wait_idle(WAIT));
    assert_eq!(h.sink("viewer").entries()[0].sop_instance_uid, sc.sop_instance_uid().unwrap());
    assert!(h.mllp.as_ref().unwrap().messages().is_empty());
    assert_eq!(count(&g, &s, AuditCategory::Hl7Sent), 0);
}

#[test]
fn unmatched_result_is_quarantined() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, &format!("{AI_EXTRA}quarantine_dir = q\n"));
    let mut stray = ct_study(13, 1).remove(0);
    stray.dataset.set_text(tags::ACCESSION_NUMBER, Vr::SH, "NOPE");
    let sr = sr_for(&stray, Detection::Pos, Priority::High);
    assert_eq!(send(&g, "AIRECV", std::slice::from_ref(&sr)), vec![0]);
    assert!(g.wait_idle(WAIT));
    assert!(h.path("q").join(format!("{}.dcm", sr.sop_instance_uid().unwrap())).exists());
    assert!(h.sink("viewer").entries().is_empty());
    assert_eq!(count(&g, &study_uid(&stray), AuditCategory::Error), 1);
    assert!(h.mllp.as_ref().unwrap().messages().is_empty());
}

#[test]
fn result_correlates_by_accession() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Accept));
    let g = h.start(AI_RULES, AI_EXTRA);
    let files = ct_study(14, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::AiPending, WAIT).is_some());
    let mut other = files[0].clone();
    other.dataset.set_text(tags::STUDY_INSTANCE_UID, Vr::UI, "1.2.3.4");
    send(&g, "AIRECV", &[sr_for(&other, Detection::Pos, Priority::High)]);
    assert!(g.wait_for_state(&s, StudyState::Hl7Sent, WAIT).is_some());
}

#[test]
fn hl7_failure_fails_the_study_and_dead_letters_the_message() {
    let h = Harness::new(&[("pacs", ""), ("ai", ""), ("viewer", "")], Some(AckMode::Error));
    let g = h.start(AI_RULES, &format!("{AI_EXTRA}retry_max = 2\ndead_letter_dir = dl\n"));
    let files = ct_study(15, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::AiPending, WAIT).is_some());
    send(&g, "AIRECV", &[sr_for(&files[0], Detection::Pos, Priority::High)]);
    assert!(g.wait_for_state(&s, StudyState::Failed, WAIT).is_some());
    assert!(g.wait_idle(WAIT));
    assert_eq!(h.mllp.as_ref().unwrap().messages().len(), 2);
    let dead: Vec<_> = std::fs::read_dir(h.path("dl").join("hl7")).unwrap().map(|e| e.unwrap().path()).collect();
    let hl7 = dead.iter().find(|p| p.extension().is_some_and(|e| e == "hl7")).expect("dead-lettered message");
    assert!(parse_message(&std::fs::read(hl7).unwrap()).is_ok());
    assert_eq!(count(&g, &s, AuditCategory::Hl7Sent), 0);
}

#[test]
fn ai_timeout_fails_the_study() {
    let h = Harness::new(&[("pacs", ""), ("ai", "")], None);
    let g = h.start(AI_RULES, "ai_dests = ai\nai_timeout_s = 0.3\n");
    let files = ct_study(16, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    let rec = g.wait_for_state(&s, StudyState::Failed, WAIT).expect("FAILED");
    let at = |st: StudyState| rec.history.iter().find(|h| h.0 == st).unwrap().1;
    assert!((at(StudyState::Failed) - at(StudyState::AiPending)).num_milliseconds() >= 295);
}

#[test]
fn study_without_ai_route_stops_at_forwarded() {
    let h = Harness::new(&[("pacs", ""), ("ai", "")], None);
    let g = h.start("[rule all]\nwhen = true\nroute = pacs : parallel\n", "ai_dests = ai\nai_timeout_s = 0.2\n");
    let files = ct_study(17, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::Forwarded, WAIT).is_some());
    std::thread::sleep(Duration::from_millis(400));
    assert_eq!(g.record(&s).unwrap().state, StudyState::Forwarded);
}

#[test]
fn illegal_transition_is_audited_and_ignored() {
    let h = Harness::new(&[("pacs", "")], None);
    let g = h.start("[rule all]\nwhen = true\nroute = pacs : parallel\n", "");
    let files = ct_study(19, 1);
    let s = study_uid(&files[0]);
    send(&g, "MOD1", &files);
    assert!(g.wait_for_state(&s, StudyState::Forwarded, WAIT).is_some());
    assert_eq!(g.transition(&s, StudyEvent::AiResult), Some(StudyState::Forwarded));
    assert_eq!(count(&g, &s, AuditCategory::Error), 1);
    assert_eq!(g.transition(&s, StudyEvent::Fail("operator".into())), Some(StudyState::Failed));
    assert_eq!(g.transition("no.such.study", StudyEvent::AiResult), None);

    // late instance after the study settled: routed, record unchanged, audited
    send(&g, "MOD1", &ct_study(19, 2)[1..]);
    assert!(g.wait_idle(WAIT));
    assert_eq!(g.record(&s).unwrap().state, StudyState::Failed);
    assert_eq!(count(&g, &s, AuditCategory::Error), 2);
    assert_eq!(h.sink("pacs").entries().len(), 2);
}

#[test]
fn audit_log_survives_restart() {
    let h = Harness::new(&[("pacs", "")], None);
    let rules = "[rule all]\nwhen = true\nroute = pacs : parallel\n";
    let files = ct_study(20, 2);
    let s = study_uid(&files[0]);
    let before = {
        let g = h.start(rules, "audit_log = state/audit.log\n");
        send(&g, "MOD1", &files);
        assert!(g.wait_idle(WAIT));
        let ev = g.audit_query(&AuditFilter::study(&s));
        g.shutdown();
        ev
    };
    assert_eq!(before.len(), 6);
    assert!(before.windows(2).all(|w| w[0].seq < w[1].seq));
    let g = h.start(rules, "audit_log = state/audit.log\n");
    assert_eq!(g.audit_query(&AuditFilter::study(&s)), before);
    assert_eq!(read_audit(&h.path("state/audit.log"), &AuditFilter::study(&s)).unwrap(), before);
    send(&g, "MOD1", &files[..1]);
    assert!(g.wait_idle(WAIT));
    let all = g.audit_query(&AuditFilter::default());
    assert!(all.windows(2).all(|w| w[0].seq + 1 == w[1].seq));
    assert_eq!(all.len(), 9);
    let forwards = g.audit_query(&AuditFilter::category(AuditCategory::Forwarded));
    assert_eq!(forwards.len(), 3);
}

#[test]
fn admin_reload_installs_version_two() {
    let h = Harness::new(&[("pacs", ""), ("ai", "")], None);
    let rules_v1 = "[rule all]\nwhen = true\nroute = pacs : parallel\n";
    let g = h.start(rules_v1, "admin_port = 0\n");
    assert_eq!(g.ruleset_version(), 1);
    let admin = g.admin_addr().unwrap().to_string();
    assert_eq!(admin_command(&admin, "PING", WAIT).unwrap(), "OK");

    let conf = h.path("gateway.conf");
    let edited = h.config_text("[rule to_ai]\nwhen = true\nroute = ai : parallel\n", "admin_port = 0\n");
    std::fs::write(&conf, edited).unwrap();
    assert_eq!(admin_command(&admin, "RELOAD", WAIT).unwrap(), "OK version 2");
    let files = ct_study(21, 1);
    send(&g, "MOD1", &files);
    assert!(g.wait_idle(WAIT));
    let decisions = g.audit_query(&AuditFilter::category(AuditCategory::Decision));
    assert_eq!(decisions[0].ruleset_version, 2);
    assert!(decisions[0].detail.contains("matched=[to_ai]"));
    assert_eq!(h.sink("ai").entries().len(), 1);

    let broken = h.config_text("[rule broken]\nwhen = modality ==\n", "admin_port = 0\n");
    std::fs::write(&conf, &broken).unwrap();
    let reply = admin_command(&admin, "RELOAD", WAIT).unwrap();
    let at = format!("gateway.conf:{}:", line_of(&broken, "modality =="));
    assert!(reply.starts_with("ERR") && reply.contains(&at), "{reply}");
    assert_eq!(g.ruleset_version(), 2);
}

#[test]
fn config_errors_name_the_line() {
    let h = Harness::new(&[("pacs", "")], None);
    let path = h.path("bad.conf");
    let text = h.config_text("[rule r]\nwhen = modality ==\n", "");
    std::fs::write(&path, &text).unwrap();
    match GatewayConfig::load(&path) {
        Err(Error::ConfigInvalid { line, .. }) => assert_eq!(line, line_of(&text, "modality ==")),
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
    let rules_file = h.path("rules.conf");
    std::fs::write(&rules_file, "[rule ok]\nwhen = true\n\n[rule r]\nroute = nowhere : serial\nwhen = true\n").unwrap();
    std::fs::write(&path, "[gateway]\nlisten_port = 0\nrules = rules.conf\n").unwrap();
    match GatewayConfig::load(&path) {
        Err(Error::ConfigInvalid { path, line, .. }) => {
            assert_eq!(line, 5);
            assert!(path.ends_with("rules.conf"));
        }
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
}

#[test]
fn bind_conflict_is_reported() {
    let h = Harness::new(&[("pacs", "")], None);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let path = h.path("gateway.conf");
    let text = h
        .config_text("[rule all]\nwhen = true\n", "")
        .replace("listen_port = 0", &format!("listen_port = {}", taken.local_addr().unwrap().port()));
    std::fs::write(&path, text).unwrap();
    assert!(matches!(Gateway::start(GatewayConfig::load(&path).unwrap()), Err(Error::BindFailed(_))));
}

