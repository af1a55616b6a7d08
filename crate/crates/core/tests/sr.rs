use flowgate::dicom::{parse_part10, serialize_part10, sop, tags, DataElement, DataSet, DicomFile, Vr};
use flowgate::rules::Priority;
use flowgate::sr::{
    build_tid1500_sr, concepts, extract_fields, parse_mapping_template, parse_sr_tree, read_finding, BBox, Detection,
    Error, FindingReport, Payload, PatientInfo, StudyInfo, STANDARD_TEMPLATE,
};
use flowgate::uid::{SteppingClock, UidSource};
use proptest::prelude::*;

fn report(priority: Priority, detection: Detection, certainty: u8, bbox: Option<BBox>) -> FindingReport {
    FindingReport {
        priority,
        detection,
        certainty,
        bbox,
        evaluation_type: "MONAI".into(),
        accession: "ACC001".into(),
        study_uid: "1.2.3.4".into(),
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

fn build(r: &FindingReport) -> DicomFile {
    build_tid1500_sr(r, &UidSource::seeded(1), &SteppingClock::default_start()).unwrap()
}

#[test]
fn positive_report_has_closed_box() {
    let f = build(&report(
        Priority::High,
        Detection::Pos,
        10,
        Some(BBox {
            x0: 10,
            y0: 20,
            x1: 30,
            y1: 40,
        }),
    ));
    assert_eq!(f.sop_class_uid(), Some(sop::COMPREHENSIVE_SR));
    let tree = parse_sr_tree(&f).unwrap();
    assert_eq!(tree.children.len(), 4);
    let Payload::Scoord { graphic_type, points } = &tree.children[3].payload else {
        panic!("expected SCOORD")
    };
    assert_eq!(graphic_type, "POLYLINE");
    assert_eq!(
        points,
        &vec![(10.0, 20.0), (30.0, 20.0), (30.0, 40.0), (10.0, 40.0), (10.0, 20.0)]
    );
}

#[test]
fn negative_report_has_no_scoord() {
    let f = build(&report(Priority::Low, Detection::Neg, 0, None));
    let tree = parse_sr_tree(&f).unwrap();
    assert_eq!(tree.children.len(), 3);
    assert!(tree.walk().iter().all(|n| !matches!(n.payload, Payload::Scoord { .. })));
}

#[test]
fn invariants_are_enforced() {
    let uids = UidSource::seeded(1);
    let clock = SteppingClock::default_start();
    let bad = [
        report(Priority::High, Detection::Pos, 11, None),
        report(
            Priority::Low,
            Detection::Neg,
            0,
            Some(BBox {
                x0: 1,
                y0: 1,
                x1: 2,
                y1: 2,
            }),
        ),
        report(
            Priority::High,
            Detection::Pos,
            5,
            Some(BBox {
                x0: 5,
                y0: 2,
                x1: 5,
                y1: 3,
            }),
        ),
    ];
    for r in bad {
        assert!(matches!(build_tid1500_sr(&r, &uids, &clock), Err(Error::InvariantViolation(_))));
    }
}

#[test]
fn ct_image_is_not_an_sr() {
    let mut ds = DataSet::new();
    ds.set_text(tags::SOP_CLASS_UID, Vr::UI, sop::CT_IMAGE);
    ds.set_text(tags::SOP_INSTANCE_UID, Vr::UI, "1.2");
    let f = DicomFile::from_dataset(ds, flowgate::dicom::EXPLICIT_VR_LE).unwrap();
    assert!(matches!(parse_sr_tree(&f), Err(Error::NotAnSr(_))));
}

#[test]
fn unknown_value_type_is_opaque() {
    let mut f = build(&report(Priority::High, Detection::Pos, 7, None));
    let mut items = f.dataset.get_items(tags::CONTENT_SEQUENCE).unwrap().to_vec();
    let mut wave = DataSet::new();
    wave.set_text(tags::RELATIONSHIP_TYPE, Vr::CS, "CONTAINS");
    wave.set_text(tags::VALUE_TYPE, Vr::CS, "WAVEFORM");
    items.insert(0, wave);
    f.dataset.put(DataElement::sequence(tags::CONTENT_SEQUENCE, items));
    let tree = parse_sr_tree(&f).unwrap();
    assert_eq!(
        tree.children[0].payload,
        Payload::Opaque {
            value_type: "WAVEFORM".into()
        }
    );
    let got = extract_fields(&tree, &parse_mapping_template(STANDARD_TEMPLATE).unwrap());
    assert_eq!(got.get("AI_PRIORITY"), Some("HIGH"));
}

#[test]
fn malformed_content_is_reported() {
    let mut f = build(&report(Priority::High, Detection::Pos, 7, None));
    let mut item = DataSet::new();
    item.set_text(tags::VALUE_TYPE, Vr::CS, "CODE");
    f.dataset.put(DataElement::sequence(tags::CONTENT_SEQUENCE, vec![item]));
    assert!(matches!(parse_sr_tree(&f), Err(Error::MalformedContentSequence(_))));
}

#[test]
fn standard_template_yields_priority_and_detection() {
    let f = build(&report(Priority::High, Detection::Pos, 10, None));
    let tree = parse_sr_tree(&f).unwrap();
    let got = extract_fields(&tree, &parse_mapping_template(STANDARD_TEMPLATE).unwrap());
    assert_eq!(
        got.fields,
        vec![
            ("AI_PRIORITY".to_string(), "HIGH".to_string()),
            ("AI_DETECTION".to_string(), "POS".to_string())
        ]
    );
    assert!(got.warnings.is_empty());
}

#[test]
fn defaults_fallbacks_and_numbers() {
    let f = build(&report(Priority::Medium, Detection::Pos, 7, None));
    let tree = parse_sr_tree(&f).unwrap();
    let tpl = parse_mapping_template(
        "map AI_PRIORITY concept 99FLOWGATE:NOT_THERE { HIGH=HIGH } default LOW\n\
         map P concept 99FLOWGATE:PRIORITY { HIGH=H }\n\
         map C concept 99FLOWGATE:CERTAINTY\n\
         map GONE concept 99FLOWGATE:NOPE\n",
    )
    .unwrap();
    let got = extract_fields(&tree, &tpl);
    assert_eq!(got.get("AI_PRIORITY"), Some("LOW"));
    assert_eq!(got.get("P"), Some("MEDIUM"));
    assert_eq!(got.get("C"), Some("7"));
    assert_eq!(got.get("GONE"), None);
    assert_eq!(got.warnings.len(), 2);
}

#[test]
fn context_fields_come_from_the_dataset() {
    let r = report(Priority::High, Detection::Pos, 10, None);
    let f = build(&r);
    let back = read_finding(&f).unwrap();
    assert_eq!(back, r);
    assert_eq!(f.dataset.get_str(tags::ALGORITHM_NAME), Some("MONAI"));
    assert_eq!(
        parse_sr_tree(&f).unwrap().concept.unwrap(),
        concepts::report()
    );
}

#[test]
fn same_seed_same_bytes() {
    let r = report(Priority::High, Detection::Pos, 10, None);
    let a = serialize_part10(&build(&r)).unwrap();
    let b = serialize_part10(&build(&r)).unwrap();
    assert_eq!(a, b);
}

fn any_report() -> impl Strategy<Value = FindingReport> {
    (
        prop_oneof![Just(Priority::High), Just(Priority::Medium), Just(Priority::Low)],
        any::<bool>(),
        0u8..=10,
        (0u32..500, 0u32..500, 1u32..100, 1u32..100),
        any::<bool>(),
        "[A-Z0-9]{1,16}",
    )
        .prop_map(|(p, pos, c, (x, y, w, h), with_box, acc)| {
            let mut r = report(
                p,
                if pos { Detection::Pos } else { Detection::Neg },
                if pos { c } else { 0 },
                (pos && with_box).then_some(BBox {
                    x0: x,
                    y0: y,
                    x1: x + w,
                    y1: y + h,
                }),
            );
            r.accession = acc;
            r
        })
}

proptest! {
    #[test]
    fn build_parse_extract_round_trip(r in any_report()) {
        let f = build(&r);
        let bytes = serialize_part10(&f).unwrap();
        let back = parse_part10(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(read_finding(&back).unwrap(), r.clone());
        let tree = parse_sr_tree(&back).unwrap();
        for n in tree.walk() {
            if let Payload::Scoord { points, .. } = &n.payload {
                prop_assert_eq!(points.len(), 5);
                prop_assert_eq!(points[0], points[4]);
            }
        }
        let got = extract_fields(&tree, &parse_mapping_template(STANDARD_TEMPLATE).unwrap());
        prop_assert_eq!(got.get("AI_PRIORITY"), Some(r.priority.as_str()));
        prop_assert_eq!(got.get("AI_DETECTION"), Some(r.detection.as_str()));
    }
}
