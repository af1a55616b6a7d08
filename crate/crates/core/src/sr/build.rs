use crate::dicom::{sop, tags, DataElement, DataSet, DicomFile, Vr, EXPLICIT_VR_LE};
use crate::uid::{dicom_date, dicom_time, Clock, UidSource};

use super::{concepts, BBox, Code, Error, FindingReport, Payload, Relationship, SrNode};

/// The five corners of a closed rectangle, first repeated last.
pub fn closed_box(b: BBox) -> Vec<(f32, f32)> {
    let (x0, y0, x1, y1) = (b.x0 as f32, b.y0 as f32, b.x1 as f32, b.y1 as f32);
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
}

fn code_item(c: &Code) -> DataSet {
    let mut ds = DataSet::new();
    ds.set_text(tags::CODE_VALUE, Vr::SH, &c.value);
    ds.set_text(tags::CODING_SCHEME_DESIGNATOR, Vr::SH, &c.scheme);
    ds.set_text(tags::CODE_MEANING, Vr::LO, &c.meaning);
    ds
}

fn content_item(node: &SrNode) -> DataSet {
    let mut ds = DataSet::new();
    if let Some(r) = node.relationship {
        ds.set_text(tags::RELATIONSHIP_TYPE, Vr::CS, r.as_str());
    }
    ds.set_text(tags::VALUE_TYPE, Vr::CS, node.payload.value_type());
    if let Some(c) = &node.concept {
        ds.put(DataElement::sequence(tags::CONCEPT_NAME_CODE_SEQUENCE, vec![code_item(c)]));
    }
    match &node.payload {
        Payload::Container => {
            ds.set_text(tags::CONTINUITY_OF_CONTENT, Vr::CS, "SEPARATE");
        }
        Payload::Code(c) => {
            ds.put(DataElement::sequence(tags::CONCEPT_CODE_SEQUENCE, vec![code_item(c)]));
        }
        Payload::Text(t) => ds.set_text(tags::TEXT_VALUE, Vr::UT, t),
        Payload::Num { value, unit } => {
            let mut mv = DataSet::new();
            mv.put(DataElement::decimals(tags::NUMERIC_VALUE, &[*value]));
            mv.put(DataElement::sequence(tags::MEASUREMENT_UNITS_CODE_SEQUENCE, vec![code_item(unit)]));
            ds.put(DataElement::sequence(tags::MEASURED_VALUE_SEQUENCE, vec![mv]));
        }
        Payload::Scoord { graphic_type, points } => {
            ds.set_text(tags::GRAPHIC_TYPE, Vr::CS, graphic_type);
            let flat: Vec<f32> = points.iter().flat_map(|(x, y)| [*x, *y]).collect();
            ds.put(DataElement::f32s(tags::GRAPHIC_DATA, &flat));
        }
        Payload::Opaque { .. } => {}
    }
    if !node.children.is_empty() {
        ds.put(DataElement::sequence(
            tags::CONTENT_SEQUENCE,
            node.children.iter().map(content_item).collect(),
        ));
    }
    ds
}

/// Content tree for a finding: priority, detection, certainty and, for
/// positive findings with a box, the box as a closed polyline.
pub(crate) fn finding_tree(report: &FindingReport) -> SrNode {
    let code = |value: &str, meaning: &str| Code::new(value, super::SCHEME, meaning);
    let mut children = vec![
        SrNode::leaf(
            Relationship::Contains,
            concepts::priority(),
            Payload::Code(code(report.priority.as_str(), &title(report.priority.as_str()))),
        ),
        SrNode::leaf(
            Relationship::Contains,
            concepts::detection(),
            Payload::Code(code(
                report.detection.as_str(),
                match report.detection {
                    super::Detection::Pos => "Positive",
                    super::Detection::Neg => "Negative",
                },
            )),
        ),
        SrNode::leaf(
            Relationship::Contains,
            concepts::certainty(),
            Payload::Num {
                value: report.certainty as f64,
                unit: concepts::no_units(),
            },
        ),
    ];
    if let Some(b) = report.bbox {
        children.push(SrNode::leaf(
            Relationship::Contains,
            concepts::bbox(),
            Payload::Scoord {
                graphic_type: "POLYLINE".into(),
                points: closed_box(b),
            },
        ));
    }
    SrNode {
        concept: Some(concepts::report()),
        relationship: None,
        payload: Payload::Container,
        children,
    }
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_string() + &c.as_str().to_lowercase(),
        None => String::new(),
    }
}

/// Builds a Comprehensive SR instance for `report`. Instance and series
/// UIDs come from `uids`, content date/time from `clock`.
pub fn build_tid1500_sr(report: &FindingReport, uids: &UidSource, clock: &dyn Clock) -> Result<DicomFile, Error> {
    report.validate()?;
    let now = clock.now();
    let instance_uid = uids.next_uid();
    let mut ds = content_item(&finding_tree(report));
    let text = [
        (tags::SOP_CLASS_UID, Vr::UI, sop::COMPREHENSIVE_SR.to_string()),
        (tags::SOP_INSTANCE_UID, Vr::UI, instance_uid.clone()),
        (tags::MODALITY, Vr::CS, "SR".to_string()),
        (tags::STUDY_INSTANCE_UID, Vr::UI, report.study_uid.clone()),
        (tags::SERIES_INSTANCE_UID, Vr::UI, uids.next_uid()),
        (tags::SERIES_NUMBER, Vr::IS, "900".to_string()),
        (tags::INSTANCE_NUMBER, Vr::IS, "1".to_string()),
        (tags::ACCESSION_NUMBER, Vr::SH, report.accession.clone()),
        (tags::PATIENT_ID, Vr::LO, report.patient.id.clone()),
        (tags::PATIENT_NAME, Vr::PN, format!("{}^{}", report.patient.family, report.patient.given)),
        (tags::PATIENT_BIRTH_DATE, Vr::DA, report.patient.birth_date.clone()),
        (tags::STUDY_DATE, Vr::DA, report.study.date.clone()),
        (tags::STUDY_ID, Vr::SH, report.study.code.clone()),
        (tags::STUDY_DESCRIPTION, Vr::LO, report.study.description.clone()),
        (tags::REQUESTED_PROCEDURE_DESCRIPTION, Vr::LO, report.study.short_description.clone()),
        (tags::ALGORITHM_NAME, Vr::LO, report.evaluation_type.clone()),
        (tags::CONTENT_DATE, Vr::DA, dicom_date(&now)),
        (tags::CONTENT_TIME, Vr::TM, dicom_time(&now)),
        (tags::MANUFACTURER, Vr::LO, "flowgate".to_string()),
        (tags::COMPLETION_FLAG, Vr::CS, "COMPLETE".to_string()),
        (tags::VERIFICATION_FLAG, Vr::CS, "UNVERIFIED".to_string()),
    ];
    for (tag, vr, value) in text {
        ds.set_text(tag, vr, &value);
    }
    Ok(DicomFile::new(sop::COMPREHENSIVE_SR, &instance_uid, EXPLICIT_VR_LE, ds))
}
