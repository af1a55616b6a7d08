use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dicom::{sop, tags, DataElement, DataSet, DicomFile, Vr, EXPLICIT_VR_LE};
use crate::dimse::AeTitle;
use crate::par::{self, Execution};
use crate::rules::{Matcher, MatchExpr, Priority, SourceDef};
use crate::sr::{build_tid1500_sr, BBox, Detection, FindingReport, PatientInfo, StudyInfo};
use crate::uid::{dicom_date, dicom_time, Clock, UidSource};

use super::{InferenceResult, OpError, PixelRect, Series, Study, StudyContext, Volume};

pub const DEFAULT_THRESHOLD: i32 = 400;
pub const DEFAULT_MIN_FRACTION: f64 = 0.01;
/// Largest relative deviation of one slice gap from the mean gap.
pub const DEFAULT_SPACING_TOLERANCE: f64 = 0.10;

/// Report priority for each detection outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PriorityMapping {
    pub pos: Priority,
    pub neg: Priority,
}

impl Default for PriorityMapping {
    fn default() -> Self {
        PriorityMapping {
            pos: Priority::High,
            neg: Priority::Low,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedStudies {
    /// Sorted by study UID.
    pub studies: Vec<Study>,
    pub warnings: Vec<String>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn context_of(ds: &DataSet) -> StudyContext {
    let s = |t| ds.get_string(t).unwrap_or_default();
    let name = s(tags::PATIENT_NAME);
    let mut parts = name.split('^');
    let description = s(tags::STUDY_DESCRIPTION);
    let short = ds.get_string(tags::REQUESTED_PROCEDURE_DESCRIPTION).unwrap_or_else(|| description.clone());
    StudyContext {
        study_uid: s(tags::STUDY_INSTANCE_UID),
        accession: s(tags::ACCESSION_NUMBER),
        patient: PatientInfo {
            id: s(tags::PATIENT_ID),
            family: parts.next().unwrap_or_default().to_string(),
            given: parts.next().unwrap_or_default().to_string(),
            birth_date: s(tags::PATIENT_BIRTH_DATE),
        },
        study: StudyInfo {
            date: s(tags::STUDY_DATE),
            code: s(tags::STUDY_ID),
            description,
            short_description: short,
        },
    }
}

fn instance_key(ds: &DataSet) -> (i64, String) {
    (
        ds.get_int(tags::INSTANCE_NUMBER).ok().flatten().unwrap_or(i64::MAX),
        ds.get_string(tags::SOP_INSTANCE_UID).unwrap_or_default(),
    )
}

/// Parses every file under `dir` and groups instances into studies and
/// series. Unreadable files become warnings.
pub fn op_study_loader(dir: &Path, exec: Execution) -> Result<LoadedStudies, OpError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files).map_err(|e| OpError::InvalidParameter(format!("{}: {e}", dir.display())))?;
    files.sort();
    let parsed = par::map(exec, &files, |p| DicomFile::read(p));

    let mut warnings = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<DataSet>>> = BTreeMap::new();
    for (path, result) in files.iter().zip(parsed) {
        let ds = match result {
            Ok(f) => f.dataset,
            Err(e) => {
                warnings.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let (Some(study), Some(series)) = (ds.get_string(tags::STUDY_INSTANCE_UID), ds.get_string(tags::SERIES_INSTANCE_UID)) else {
            warnings.push(format!("{}: missing study or series UID", path.display()));
            continue;
        };
        grouped.entry(study).or_default().entry(series).or_default().push(ds);
    }
    if grouped.is_empty() {
        return Err(OpError::NoStudiesFound(dir.to_path_buf()));
    }

    let studies = grouped
        .into_values()
        .map(|series_map| {
            let series: Vec<Series> = series_map
                .into_iter()
                .map(|(series_uid, mut instances)| {
                    instances.sort_by_cached_key(instance_key);
                    let first = &instances[0];
                    Series {
                        modality: first.get_string(tags::MODALITY).unwrap_or_default(),
                        description: first.get_string(tags::SERIES_DESCRIPTION).unwrap_or_default(),
                        slice_thickness: first.get_decimal(tags::SLICE_THICKNESS).ok().flatten(),
                        context: context_of(first),
                        series_uid,
                        instances,
                    }
                })
                .collect();
            Study {
                context: series[0].context.clone(),
                series,
            }
        })
        .collect();
    Ok(LoadedStudies { studies, warnings })
}

/// The series with the smallest UID whose first instance satisfies
/// `criteria`, across all studies.
pub fn op_series_selector(studies: &[Study], criteria: &MatchExpr) -> Result<Series, OpError> {
    let matcher = Matcher::new(criteria);
    let source = SourceDef::new("map", AeTitle::new("MAP").expect("valid AE title"));
    let mut all: Vec<&Series> = studies.iter().flat_map(|s| &s.series).collect();
    all.sort_by(|a, b| a.series_uid.cmp(&b.series_uid));
    all.into_iter()
        .find(|s| s.instances.first().is_some_and(|ds| matcher.matches(ds, &source)))
        .cloned()
        .ok_or(OpError::NoMatchingSeries)
}

fn dimension(ds: &DataSet, tag: crate::dicom::Tag, name: &str) -> Result<usize, OpError> {
    match ds.get_int(tag) {
        Ok(Some(v)) if v > 0 => Ok(v as usize),
        _ => Err(OpError::InconsistentDimensions(format!("missing or invalid {name}"))),
    }
}

fn pixels(ds: &DataSet, rows: usize, cols: usize) -> Result<Vec<i16>, OpError> {
    let bits = ds.get_int(tags::BITS_ALLOCATED).ok().flatten().unwrap_or(16);
    let samples = ds.get_int(tags::SAMPLES_PER_PIXEL).ok().flatten().unwrap_or(1);
    if bits != 16 || samples != 1 {
        return Err(OpError::UnsupportedPixelData(format!("{bits} bits, {samples} samples per pixel")));
    }
    let signed = ds.get_int(tags::PIXEL_REPRESENTATION).ok().flatten() == Some(1);
    let bytes = ds
        .get(tags::PIXEL_DATA)
        .and_then(DataElement::bytes)
        .ok_or_else(|| OpError::UnsupportedPixelData("no native pixel data".into()))?;
    if bytes.len() < rows * cols * 2 {
        return Err(OpError::InconsistentDimensions(format!(
            "pixel data holds {} bytes, {rows}x{cols} needs {}",
            bytes.len(),
            rows * cols * 2
        )));
    }
    Ok(bytes[..rows * cols * 2]
        .chunks_exact(2)
        .map(|c| {
            let raw = [c[0], c[1]];
            if signed {
                i16::from_le_bytes(raw)
            } else {
                u16::from_le_bytes(raw).min(i16::MAX as u16) as i16
            }
        })
        .collect())
}

fn decimals<const N: usize>(ds: &DataSet, tag: crate::dicom::Tag) -> Option<[f64; N]> {
    ds.get_decimals(tag).ok().flatten().and_then(|v| v.try_into().ok())
}

/// Stacks a series into a volume ordered along the slice normal.
pub fn op_series_to_volume(series: &Series, spacing_tolerance: f64) -> Result<Volume, OpError> {
    let first = series.instances.first().ok_or(OpError::EmptyVolume)?;
    let rows = dimension(first, tags::ROWS, "Rows")?;
    let cols = dimension(first, tags::COLUMNS, "Columns")?;
    let orientation = decimals::<6>(first, tags::IMAGE_ORIENTATION_PATIENT).unwrap_or([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let [r0, r1, r2, c0, c1, c2] = orientation;
    let normal = [r1 * c2 - r2 * c1, r2 * c0 - r0 * c2, r0 * c1 - r1 * c0];

    struct Slice {
        position: Option<[f64; 3]>,
        key: (i64, String),
        pixels: Vec<i16>,
    }
    let mut slices = Vec::with_capacity(series.instances.len());
    for ds in &series.instances {
        let (r, c) = (dimension(ds, tags::ROWS, "Rows")?, dimension(ds, tags::COLUMNS, "Columns")?);
        if (r, c) != (rows, cols) {
            return Err(OpError::InconsistentDimensions(format!("{r}x{c} slice in a {rows}x{cols} series")));
        }
        slices.push(Slice {
            position: decimals::<3>(ds, tags::IMAGE_POSITION_PATIENT),
            key: instance_key(ds),
            pixels: pixels(ds, rows, cols)?,
        });
    }

    let projected = slices.iter().all(|s| s.position.is_some());
    let along = |s: &Slice| s.position.map_or(0.0, |p| p[0] * normal[0] + p[1] * normal[1] + p[2] * normal[2]);
    if projected {
        slices.sort_by(|a, b| along(a).total_cmp(&along(b)).then_with(|| a.key.cmp(&b.key)));
    } else {
        slices.sort_by(|a, b| a.key.cmp(&b.key));
    }

    let fallback_dz = series.slice_thickness.filter(|t| *t > 0.0).unwrap_or(1.0);
    let dz = if projected && slices.len() > 1 {
        let gaps: Vec<f64> = slices.windows(2).map(|w| along(&w[1]) - along(&w[0])).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        if mean <= 0.0 {
            return Err(OpError::NonUniformSpacing { gap: 0.0, mean });
        }
        let worst = gaps
            .iter()
            .copied()
            .max_by(|a, b| (a - mean).abs().total_cmp(&(b - mean).abs()))
            .expect("at least one gap");
        if (worst - mean).abs() > spacing_tolerance * mean {
            return Err(OpError::NonUniformSpacing { gap: worst, mean });
        }
        mean
    } else {
        fallback_dz
    };
    let (dy, dx) = match decimals::<2>(first, tags::PIXEL_SPACING) {
        Some([row, col]) if row > 0.0 && col > 0.0 => (row, col),
        _ => (1.0, 1.0),
    };

    let origin = slices[0].position.unwrap_or([0.0; 3]);
    let nz = slices.len();
    let voxels: Vec<i16> = slices.into_iter().flat_map(|s| s.pixels).collect();
    Ok(Volume {
        dims: (nz, rows, cols),
        spacing: (dz, dy, dx),
        voxels,
        origin,
        orientation,
    })
}

/// Thresholds the mid-axial slice: POS when the bright fraction reaches
/// `min_fraction`, with the tight box around the bright voxels.
pub fn op_stub_inference(v: &Volume, threshold: i32, min_fraction: f64) -> Result<InferenceResult, OpError> {
    let (nz, ny, nx) = v.dims;
    if nz == 0 || ny == 0 || nx == 0 || v.voxels.len() != nz * ny * nx {
        return Err(OpError::EmptyVolume);
    }
    if !(min_fraction > 0.0 && min_fraction <= 1.0) {
        return Err(OpError::InvalidParameter(format!("min_fraction {min_fraction} outside (0, 1]")));
    }
    let slice = v.slice(nz / 2);
    let mut count = 0usize;
    let mut rect: Option<PixelRect> = None;
    for (i, &value) in slice.iter().enumerate() {
        if i32::from(value) < threshold {
            continue;
        }
        count += 1;
        let (x, y) = ((i % nx) as u32, (i / nx) as u32);
        rect = Some(match rect {
            None => PixelRect { x0: x, y0: y, x1: x, y1: y },
            Some(r) => PixelRect {
                x0: r.x0.min(x),
                y0: r.y0.min(y),
                x1: r.x1.max(x),
                y1: r.y1.max(y),
            },
        });
    }
    let fraction = count as f64 / (ny * nx) as f64;
    if count == 0 || fraction < min_fraction {
        return Ok(InferenceResult {
            detection: Detection::Neg,
            certainty: 0,
            bbox: None,
            fraction,
        });
    }
    // the small epsilon keeps exact ratios such as 0.02 / 0.01 from
    // flooring one short
    let certainty = (10.0 * fraction / min_fraction + 1e-9).floor().min(10.0) as u8;
    Ok(InferenceResult {
        detection: Detection::Pos,
        certainty,
        bbox: rect,
        fraction,
    })
}

fn write_file(file: &DicomFile, output_dir: &Path, prefix: &str) -> Result<PathBuf, OpError> {
    std::fs::create_dir_all(output_dir).map_err(|e| OpError::WriteFailed(format!("{}: {e}", output_dir.display())))?;
    let uid = file.sop_instance_uid().unwrap_or("unnamed");
    let path = output_dir.join(format!("{prefix}_{uid}.dcm"));
    file.write(&path).map_err(|e| OpError::WriteFailed(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes the finding as a structured report into `output_dir`.
pub fn op_write_sr(
    result: &InferenceResult,
    context: &StudyContext,
    evaluation_type: &str,
    priorities: PriorityMapping,
    output_dir: &Path,
    uids: &UidSource,
    clock: &dyn Clock,
) -> Result<PathBuf, OpError> {
    let report = FindingReport {
        priority: match result.detection {
            Detection::Pos => priorities.pos,
            Detection::Neg => priorities.neg,
        },
        detection: result.detection,
        certainty: result.certainty,
        // inclusive pixel corners to pixel-edge coordinates
        bbox: result.bbox.map(|r| BBox {
            x0: r.x0,
            y0: r.y0,
            x1: r.x1 + 1,
            y1: r.y1 + 1,
        }),
        evaluation_type: evaluation_type.to_string(),
        accession: context.accession.clone(),
        study_uid: context.study_uid.clone(),
        patient: context.patient.clone(),
        study: context.study.clone(),
    };
    let file = build_tid1500_sr(&report, uids, clock).map_err(|e| OpError::InvalidParameter(e.to_string()))?;
    write_file(&file, output_dir, "SR")
}

/// Renders the mid-axial slice to 8 bits with the finding box drawn as a
/// one-pixel frame, as a secondary capture image.
pub fn op_write_sc(
    result: &InferenceResult,
    volume: &Volume,
    context: &StudyContext,
    output_dir: &Path,
    uids: &UidSource,
    clock: &dyn Clock,
) -> Result<PathBuf, OpError> {
    let (nz, ny, nx) = volume.dims;
    if nz == 0 || ny == 0 || nx == 0 {
        return Err(OpError::EmptyVolume);
    }
    let slice = volume.slice(nz / 2);
    let lo = *slice.iter().min().expect("non-empty") as i32;
    let hi = *slice.iter().max().expect("non-empty") as i32;
    let mut image: Vec<u8> = slice
        .iter()
        .map(|&v| if hi == lo { 0 } else { ((v as i32 - lo) * 255 / (hi - lo)) as u8 })
        .collect();
    if let Some(r) = result.bbox {
        for y in r.y0..=r.y1.min(ny as u32 - 1) {
            for x in r.x0..=r.x1.min(nx as u32 - 1) {
                if x == r.x0 || x == r.x1 || y == r.y0 || y == r.y1 {
                    image[y as usize * nx + x as usize] = 255;
                }
            }
        }
    }

    let now = clock.now();
    let instance_uid = uids.next_uid();
    let mut ds = DataSet::new();
    let name = format!("{}^{}", context.patient.family, context.patient.given);
    let text = [
        (tags::SOP_CLASS_UID, Vr::UI, sop::SECONDARY_CAPTURE.to_string()),
        (tags::SOP_INSTANCE_UID, Vr::UI, instance_uid.clone()),
        (tags::MODALITY, Vr::CS, "OT".to_string()),
        (tags::CONVERSION_TYPE, Vr::CS, "WSD".to_string()),
        (tags::STUDY_INSTANCE_UID, Vr::UI, context.study_uid.clone()),
        (tags::SERIES_INSTANCE_UID, Vr::UI, uids.next_uid()),
        (tags::SERIES_NUMBER, Vr::IS, "901".to_string()),
        (tags::INSTANCE_NUMBER, Vr::IS, "1".to_string()),
        (tags::SERIES_DESCRIPTION, Vr::LO, format!("AI overlay {}", result.detection)),
        (tags::ACCESSION_NUMBER, Vr::SH, context.accession.clone()),
        (tags::PATIENT_ID, Vr::LO, context.patient.id.clone()),
        (tags::PATIENT_NAME, Vr::PN, name),
        (tags::PATIENT_BIRTH_DATE, Vr::DA, context.patient.birth_date.clone()),
        (tags::STUDY_DATE, Vr::DA, context.study.date.clone()),
        (tags::STUDY_ID, Vr::SH, context.study.code.clone()),
        (tags::STUDY_DESCRIPTION, Vr::LO, context.study.description.clone()),
        (tags::CONTENT_DATE, Vr::DA, dicom_date(&now)),
        (tags::CONTENT_TIME, Vr::TM, dicom_time(&now)),
        (tags::PHOTOMETRIC_INTERPRETATION, Vr::CS, "MONOCHROME2".to_string()),
    ];
    for (tag, vr, value) in text {
        ds.set_text(tag, vr, &value);
    }
    ds.put(DataElement::u16(tags::SAMPLES_PER_PIXEL, 1));
    ds.put(DataElement::u16(tags::ROWS, ny as u16));
    ds.put(DataElement::u16(tags::COLUMNS, nx as u16));
    ds.put(DataElement::u16(tags::BITS_ALLOCATED, 8));
    ds.put(DataElement::u16(tags::BITS_STORED, 8));
    ds.put(DataElement::u16(tags::HIGH_BIT, 7));
    ds.put(DataElement::u16(tags::PIXEL_REPRESENTATION, 0));
    ds.put(DataElement::new(tags::PIXEL_DATA, Vr::OB, image));
    let file = DicomFile::new(sop::SECONDARY_CAPTURE, &instance_uid, EXPLICIT_VR_LE, ds);
    write_file(&file, output_dir, "SC")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(nz: usize, ny: usize, nx: usize, bright: &[(usize, usize, usize)]) -> Volume {
        let mut voxels = vec![0i16; nz * ny * nx];
        for &(z, y, x) in bright {
            voxels[(z * ny + y) * nx + x] = 1000;
        }
        Volume {
            dims: (nz, ny, nx),
            spacing: (1.0, 1.0, 1.0),
            voxels,
            origin: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    #[test]
    fn all_zero_is_negative() {
        let r = op_stub_inference(&volume(3, 8, 8, &[]), DEFAULT_THRESHOLD, DEFAULT_MIN_FRACTION).unwrap();
        assert_eq!((r.detection, r.certainty, r.bbox, r.fraction), (Detection::Neg, 0, None, 0.0));
    }

    #[test]
    fn hand_counted_block() {
        // rows 2 and 3 of column 5: 2 of 100 voxels
        let v = volume(1, 10, 10, &[(0, 2, 5), (0, 3, 5)]);
        let r = op_stub_inference(&v, 400, 0.01).unwrap();
        assert_eq!(r.detection, Detection::Pos);
        assert_eq!(r.certainty, 10);
        assert_eq!(r.bbox, Some(PixelRect { x0: 5, y0: 2, x1: 5, y1: 3 }));
        assert!((r.fraction - 0.02).abs() < 1e-12);
        assert_eq!(op_stub_inference(&v, 400, 0.05).unwrap().detection, Detection::Neg);
    }

    #[test]
    fn only_the_mid_slice_counts() {
        let v = volume(3, 4, 4, &[(0, 0, 0), (2, 1, 1)]);
        assert_eq!(op_stub_inference(&v, 400, 0.01).unwrap().detection, Detection::Neg);
        let v = volume(3, 4, 4, &[(1, 1, 1)]);
        assert_eq!(op_stub_inference(&v, 400, 0.01).unwrap().detection, Detection::Pos);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(op_stub_inference(&volume(0, 4, 4, &[]), 400, 0.01), Err(OpError::EmptyVolume));
        assert!(matches!(op_stub_inference(&volume(1, 4, 4, &[]), 400, 0.0), Err(OpError::InvalidParameter(_))));
    }
}
