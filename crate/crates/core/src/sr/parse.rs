use crate::dicom::{sop, tags, DataSet, DicomFile};
use crate::rules::Priority;

use super::{concepts, BBox, Code, Detection, Error, FindingReport, Payload, PatientInfo, Relationship, SrNode, StudyInfo};

fn malformed(m: impl Into<String>) -> Error {
    Error::MalformedContentSequence(m.into())
}

fn code_from(items: Option<&[DataSet]>, what: &str) -> Result<Code, Error> {
    let item = items
        .and_then(|i| i.first())
        .ok_or_else(|| malformed(format!("{what} has no code item")))?;
    let value = item.get_string(tags::CODE_VALUE).unwrap_or_default();
    let scheme = item.get_string(tags::CODING_SCHEME_DESIGNATOR).unwrap_or_default();
    if value.is_empty() || scheme.is_empty() {
        return Err(malformed(format!("{what} lacks code value or scheme")));
    }
    Ok(Code {
        value,
        scheme,
        meaning: item.get_string(tags::CODE_MEANING).unwrap_or_default(),
    })
}

fn node_from(ds: &DataSet, root: bool) -> Result<SrNode, Error> {
    let value_type = ds
        .get_string(tags::VALUE_TYPE)
        .ok_or_else(|| malformed("content item without ValueType"))?;
    let relationship = if root {
        None
    } else {
        let r = ds
            .get_string(tags::RELATIONSHIP_TYPE)
            .ok_or_else(|| malformed("content item without RelationshipType"))?;
        Some(Relationship::parse(&r).ok_or_else(|| malformed(format!("relationship {r:?}")))?)
    };
    let concept = match ds.get_items(tags::CONCEPT_NAME_CODE_SEQUENCE) {
        Some(items) => Some(code_from(Some(items), "concept name")?),
        None => None,
    };
    let payload = match value_type.as_str() {
        "CONTAINER" => Payload::Container,
        "CODE" => Payload::Code(code_from(ds.get_items(tags::CONCEPT_CODE_SEQUENCE), "CODE item")?),
        "TEXT" => Payload::Text(ds.get_string(tags::TEXT_VALUE).unwrap_or_default()),
        "NUM" => {
            let mv = ds
                .get_items(tags::MEASURED_VALUE_SEQUENCE)
                .and_then(|i| i.first())
                .ok_or_else(|| malformed("NUM without measured value"))?;
            let value = mv
                .get_decimal(tags::NUMERIC_VALUE)
                .map_err(|e| malformed(e.to_string()))?
                .ok_or_else(|| malformed("NUM without NumericValue"))?;
            let unit = code_from(mv.get_items(tags::MEASUREMENT_UNITS_CODE_SEQUENCE), "units")?;
            Payload::Num { value, unit }
        }
        "SCOORD" => {
            let graphic_type = ds.get_string(tags::GRAPHIC_TYPE).unwrap_or_default();
            let flat = ds
                .get(tags::GRAPHIC_DATA)
                .ok_or_else(|| malformed("SCOORD without GraphicData"))?
                .as_f64s()
                .map_err(|e| malformed(e.to_string()))?;
            if flat.len() % 2 != 0 {
                return Err(malformed("odd number of graphic coordinates"));
            }
            let points = flat.chunks(2).map(|p| (p[0] as f32, p[1] as f32)).collect();
            Payload::Scoord { graphic_type, points }
        }
        other => Payload::Opaque {
            value_type: other.to_string(),
        },
    };
    if root && payload != Payload::Container {
        return Err(malformed(format!("root is {value_type}, not CONTAINER")));
    }
    let children = match ds.get_items(tags::CONTENT_SEQUENCE) {
        Some(items) => items.iter().map(|i| node_from(i, false)).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    Ok(SrNode {
        concept,
        relationship,
        payload,
        children,
    })
}

/// Decodes the content tree of an SR instance.
pub fn parse_sr_tree(file: &DicomFile) -> Result<SrNode, Error> {
    let class = file.sop_class_uid().unwrap_or_default();
    if !sop::is_sr(class) {
        return Err(Error::NotAnSr(class.to_string()));
    }
    node_from(&file.dataset, true)
}

/// Patient and study context carried by an SR dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SrContext {
    pub accession: String,
    pub study_uid: String,
    pub evaluation_type: String,
    pub patient: PatientInfo,
    pub study: StudyInfo,
}

pub fn sr_context(ds: &DataSet) -> SrContext {
    let s = |t| ds.get_string(t).unwrap_or_default();
    let name = s(tags::PATIENT_NAME);
    let mut parts = name.split('^');
    SrContext {
        accession: s(tags::ACCESSION_NUMBER),
        study_uid: s(tags::STUDY_INSTANCE_UID),
        evaluation_type: s(tags::ALGORITHM_NAME),
        patient: PatientInfo {
            id: s(tags::PATIENT_ID),
            family: parts.next().unwrap_or_default().to_string(),
            given: parts.next().unwrap_or_default().to_string(),
            birth_date: s(tags::PATIENT_BIRTH_DATE),
        },
        study: StudyInfo {
            date: s(tags::STUDY_DATE),
            code: s(tags::STUDY_ID),
            description: s(tags::STUDY_DESCRIPTION),
            short_description: s(tags::REQUESTED_PROCEDURE_DESCRIPTION),
        },
    }
}

/// Reads a finding back out of an SR built by this crate.
pub fn read_finding(file: &DicomFile) -> Result<FindingReport, Error> {
    let tree = parse_sr_tree(file)?;
    let code = |c: &Code| match tree.find(c).map(|n| &n.payload) {
        Some(Payload::Code(v)) => Ok(v.value.clone()),
        _ => Err(malformed(format!("no {} code", c.value))),
    };
    let priority: Priority = code(&concepts::priority())?.parse().map_err(malformed)?;
    let detection: Detection = code(&concepts::detection())?.parse().map_err(malformed)?;
    let certainty = match tree.find(&concepts::certainty()).map(|n| &n.payload) {
        Some(Payload::Num { value, .. }) if (0.0..=10.0).contains(value) && value.fract() == 0.0 => *value as u8,
        _ => return Err(malformed("no usable certainty")),
    };
    let bbox = match tree.find(&concepts::bbox()).map(|n| &n.payload) {
        Some(Payload::Scoord { points, .. }) if points.len() >= 4 => {
            let xs = points.iter().map(|p| p.0);
            let ys = points.iter().map(|p| p.1);
            let min = |it: &mut dyn Iterator<Item = f32>| it.fold(f32::INFINITY, f32::min) as u32;
            let max = |it: &mut dyn Iterator<Item = f32>| it.fold(f32::NEG_INFINITY, f32::max) as u32;
            Some(BBox {
                x0: min(&mut xs.clone()),
                y0: min(&mut ys.clone()),
                x1: max(&mut xs.clone()),
                y1: max(&mut ys.clone()),
            })
        }
        Some(_) => return Err(malformed("BBOX is not a polyline")),
        None => None,
    };
    let ctx = sr_context(&file.dataset);
    Ok(FindingReport {
        priority,
        detection,
        certainty,
        bbox,
        evaluation_type: ctx.evaluation_type,
        accession: ctx.accession,
        study_uid: ctx.study_uid,
        patient: ctx.patient,
        study: ctx.study,
    })
}
