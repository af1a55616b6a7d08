//! Tag morphing applied to an instance before it is forwarded.

use crate::dicom::{DataElement, DataSet, Tag, Vr};

use super::MorphOp;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MorphWarning {
    CopySourceMissing { from: Tag, to: Tag },
}

/// VRs a `set` morph can write from a text value.
pub(crate) fn settable(vr: Vr) -> bool {
    !matches!(vr, Vr::OB | Vr::OW | Vr::UN | Vr::SQ)
}

fn numbers<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split('\\')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("{p:?} is not a valid number")))
        .collect()
}

fn encode(vr: Vr, value: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    match vr {
        Vr::US => numbers::<u16>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        Vr::SS => numbers::<i16>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        Vr::UL => numbers::<u32>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        Vr::SL => numbers::<i32>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        Vr::FL => numbers::<f32>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        Vr::FD => numbers::<f64>(value)?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        _ => out.extend_from_slice(value.as_bytes()),
    }
    Ok(out)
}

pub(crate) fn check_value(vr: Vr, value: &str) -> Result<(), String> {
    let bytes = encode(vr, value)?;
    if !vr.has_long_length() && bytes.len() > 0xFFFE {
        return Err("value too long".into());
    }
    Ok(())
}

fn element(tag: Tag, vr: Vr, value: &str) -> DataElement {
    match encode(vr, value) {
        Ok(b) if matches!(vr, Vr::US | Vr::SS | Vr::UL | Vr::SL | Vr::FL | Vr::FD) => DataElement::new(tag, vr, b),
        _ => DataElement::text(tag, vr, value),
    }
}

/// Applies morphs in order. A copy whose source is absent is skipped with
/// a warning; everything else always succeeds.
pub fn apply_morphs(mut ds: DataSet, morphs: &[MorphOp]) -> (DataSet, Vec<MorphWarning>) {
    let mut warnings = Vec::new();
    for m in morphs {
        match m {
            MorphOp::Set { tag, vr, value } => {
                ds.put(element(*tag, *vr, value));
            }
            MorphOp::Delete(tag) => {
                ds.remove(*tag);
            }
            MorphOp::Copy { from, to } => match ds.get(*from) {
                Some(src) => {
                    let mut e = src.clone();
                    e.tag = *to;
                    ds.put(e);
                }
                None => warnings.push(MorphWarning::CopySourceMissing { from: *from, to: *to }),
            },
        }
    }
    (ds, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::{serialize_dataset, tags, EXPLICIT_VR_LE};

    fn sample() -> DataSet {
        let mut ds = DataSet::new();
        ds.set_text(tags::MODALITY, Vr::CS, "CT");
        ds.set_text(tags::ACCESSION_NUMBER, Vr::SH, "ACC1");
        ds.put(DataElement::new(Tag::new(0x0009, 0x0010), Vr::LO, b"PRIV".to_vec()));
        ds
    }

    #[test]
    fn empty_list_is_identity() {
        let (out, w) = apply_morphs(sample(), &[]);
        assert_eq!(out, sample());
        assert!(w.is_empty());
    }

    #[test]
    fn set_is_readable() {
        let (out, _) = apply_morphs(
            sample(),
            &[MorphOp::Set {
                tag: tags::INSTITUTION_NAME,
                vr: Vr::LO,
                value: "CAII".into(),
            }],
        );
        assert_eq!(out.get_str(tags::INSTITUTION_NAME), Some("CAII"));
    }

    #[test]
    fn set_then_delete_equals_delete() {
        let set = MorphOp::Set {
            tag: tags::MODALITY,
            vr: Vr::CS,
            value: "MR".into(),
        };
        let del = MorphOp::Delete(tags::MODALITY);
        assert_eq!(apply_morphs(sample(), &[set, del.clone()]).0, apply_morphs(sample(), &[del]).0);
    }

    #[test]
    fn copy_and_missing_source() {
        let (out, w) = apply_morphs(
            sample(),
            &[
                MorphOp::Copy {
                    from: tags::ACCESSION_NUMBER,
                    to: tags::STUDY_ID,
                },
                MorphOp::Copy {
                    from: tags::PATIENT_ID,
                    to: tags::STUDY_ID,
                },
            ],
        );
        assert_eq!(out.get_str(tags::STUDY_ID), Some("ACC1"));
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn binary_set() {
        let (out, _) = apply_morphs(
            DataSet::new(),
            &[MorphOp::Set {
                tag: tags::ROWS,
                vr: Vr::US,
                value: "512".into(),
            }],
        );
        assert_eq!(out.get_int(tags::ROWS).unwrap(), Some(512));
        assert!(check_value(Vr::US, "70000").is_err());
    }

    #[test]
    fn untouched_elements_serialize_identically() {
        let before = serialize_dataset(&sample(), EXPLICIT_VR_LE).unwrap();
        let (out, _) = apply_morphs(sample(), &[MorphOp::Delete(Tag::new(0x0009, 0x0010))]);
        let after = serialize_dataset(&out, EXPLICIT_VR_LE).unwrap();
        // the private element is last, so the rest is a prefix
        assert!(before.starts_with(&after));
    }
}
