use std::path::{Path, PathBuf};

use crate::dicom::{sop, tags, DataElement, DataSet, DicomFile, Vr, EXPLICIT_VR_LE};
use crate::uid::UidSource;

use super::Error;

/// A cuboid of constant value: slices z..z+depth, rows y..y+height,
/// columns x..x+width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BrightBlock {
    pub z: usize,
    pub y: usize,
    pub x: usize,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub value: i16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSpec {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub slice_thickness: f64,
    pub description: String,
    pub bright: Option<BrightBlock>,
}

impl SeriesSpec {
    pub fn new(count: usize, rows: usize, cols: usize, slice_thickness: f64) -> Self {
        SeriesSpec {
            count,
            rows,
            cols,
            slice_thickness,
            description: format!("{slice_thickness} mm"),
            bright: None,
        }
    }

    pub fn with_bright(mut self, block: BrightBlock) -> Self {
        self.bright = Some(block);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStudySpec {
    pub seed: u64,
    pub modality: String,
    pub study_description: String,
    pub short_description: String,
    pub study_code: String,
    pub study_date: String,
    pub accession: String,
    pub patient_id: String,
    pub patient_family: String,
    pub patient_given: String,
    pub patient_birth_date: String,
    pub institution: String,
    pub series: Vec<SeriesSpec>,
}

impl SyntheticStudySpec {
    /// A chest CT with demographics matching the sample priority message.
    pub fn chest_ct(seed: u64, series: Vec<SeriesSpec>) -> Self {
        SyntheticStudySpec {
            seed,
            modality: "CT".into(),
            study_description: "XRAY CHEST".into(),
            short_description: "CHEST".into(),
            study_code: "XR1".into(),
            study_date: "20240101".into(),
            accession: "ACC001".into(),
            patient_id: "12345".into(),
            patient_family: "DOE".into(),
            patient_given: "JANE".into(),
            patient_birth_date: "19700101".into(),
            institution: "GENERAL HOSPITAL".into(),
            series,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.series.is_empty() {
            return Err(Error::InvariantViolation("study without series".into()));
        }
        for (i, s) in self.series.iter().enumerate() {
            if s.count == 0 || s.rows == 0 || s.cols == 0 || s.rows > 0xFFFF || s.cols > 0xFFFF {
                return Err(Error::InvariantViolation(format!("series {i}: empty or oversized dimensions")));
            }
            if !(s.slice_thickness > 0.0 && s.slice_thickness.is_finite()) {
                return Err(Error::InvariantViolation(format!("series {i}: slice thickness must be positive")));
            }
            if let Some(b) = s.bright {
                if b.z + b.depth > s.count || b.y + b.height > s.rows || b.x + b.width > s.cols {
                    return Err(Error::InvariantViolation(format!("series {i}: bright block outside the volume")));
                }
            }
        }
        Ok(())
    }
}

fn image_class(modality: &str) -> &'static str {
    match modality {
        "CT" => sop::CT_IMAGE,
        "MR" => sop::MR_IMAGE,
        _ => sop::SECONDARY_CAPTURE,
    }
}

/// Builds the study in memory. UIDs come from the seed, so equal specs
/// give identical files.
pub fn synthetic_study(spec: &SyntheticStudySpec) -> Result<Vec<DicomFile>, Error> {
    spec.validate()?;
    let uids = UidSource::seeded(spec.seed);
    let study_uid = uids.next_uid();
    let class = image_class(&spec.modality);
    let mut files = Vec::new();
    for (si, s) in spec.series.iter().enumerate() {
        let series_uid = uids.next_uid();
        for z in 0..s.count {
            let instance_uid = uids.next_uid();
            let mut ds = DataSet::new();
            let text = [
                (tags::SOP_CLASS_UID, Vr::UI, class.to_string()),
                (tags::SOP_INSTANCE_UID, Vr::UI, instance_uid.clone()),
                (tags::STUDY_DATE, Vr::DA, spec.study_date.clone()),
                (tags::ACCESSION_NUMBER, Vr::SH, spec.accession.clone()),
                (tags::MODALITY, Vr::CS, spec.modality.clone()),
                (tags::MANUFACTURER, Vr::LO, "SYNTHETIC".to_string()),
                (tags::INSTITUTION_NAME, Vr::LO, spec.institution.clone()),
                (tags::STUDY_DESCRIPTION, Vr::LO, spec.study_description.clone()),
                (tags::SERIES_DESCRIPTION, Vr::LO, s.description.clone()),
                (tags::PATIENT_NAME, Vr::PN, format!("{}^{}", spec.patient_family, spec.patient_given)),
                (tags::PATIENT_ID, Vr::LO, spec.patient_id.clone()),
                (tags::PATIENT_BIRTH_DATE, Vr::DA, spec.patient_birth_date.clone()),
                (tags::STUDY_INSTANCE_UID, Vr::UI, study_uid.clone()),
                (tags::SERIES_INSTANCE_UID, Vr::UI, series_uid.clone()),
                (tags::STUDY_ID, Vr::SH, spec.study_code.clone()),
                (tags::SERIES_NUMBER, Vr::IS, (si + 1).to_string()),
                (tags::INSTANCE_NUMBER, Vr::IS, (z + 1).to_string()),
                (tags::PHOTOMETRIC_INTERPRETATION, Vr::CS, "MONOCHROME2".to_string()),
                (tags::REQUESTED_PROCEDURE_DESCRIPTION, Vr::LO, spec.short_description.clone()),
            ];
            for (tag, vr, value) in text {
                ds.set_text(tag, vr, &value);
            }
            ds.put(DataElement::decimals(tags::SLICE_THICKNESS, &[s.slice_thickness]));
            ds.put(DataElement::decimals(tags::IMAGE_POSITION_PATIENT, &[0.0, 0.0, z as f64 * s.slice_thickness]));
            ds.put(DataElement::decimals(tags::IMAGE_ORIENTATION_PATIENT, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
            ds.put(DataElement::decimals(tags::PIXEL_SPACING, &[0.7, 0.7]));
            ds.put(DataElement::u16(tags::SAMPLES_PER_PIXEL, 1));
            ds.put(DataElement::u16(tags::ROWS, s.rows as u16));
            ds.put(DataElement::u16(tags::COLUMNS, s.cols as u16));
            ds.put(DataElement::u16(tags::BITS_ALLOCATED, 16));
            ds.put(DataElement::u16(tags::BITS_STORED, 16));
            ds.put(DataElement::u16(tags::HIGH_BIT, 15));
            ds.put(DataElement::u16(tags::PIXEL_REPRESENTATION, 1));
            let mut pixels = vec![0i16; s.rows * s.cols];
            if let Some(b) = s.bright.filter(|b| (b.z..b.z + b.depth).contains(&z)) {
                for y in b.y..b.y + b.height {
                    for x in b.x..b.x + b.width {
                        pixels[y * s.cols + x] = b.value;
                    }
                }
            }
            let bytes = pixels.iter().flat_map(|p| p.to_le_bytes()).collect();
            ds.put(DataElement::new(tags::PIXEL_DATA, Vr::OW, bytes));
            files.push(DicomFile::new(class, &instance_uid, EXPLICIT_VR_LE, ds));
        }
    }
    Ok(files)
}

/// Writes the study as `s<series>_i<instance>.dcm` files and returns
/// their paths in generation order.
pub fn gen_synthetic_study(spec: &SyntheticStudySpec, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    std::fs::create_dir_all(out_dir)?;
    let files = synthetic_study(spec)?;
    let mut paths = Vec::with_capacity(files.len());
    let mut counter = vec![0usize; spec.series.len()];
    let mut series_index = 0;
    for f in &files {
        while counter[series_index] == spec.series[series_index].count {
            series_index += 1;
        }
        counter[series_index] += 1;
        let path = out_dir.join(format!("s{:02}_i{:04}.dcm", series_index + 1, counter[series_index]));
        f.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
