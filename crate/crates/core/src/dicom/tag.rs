use std::fmt;
use std::str::FromStr;

use super::Error;

/// A DICOM attribute tag, ordered by `(group, element)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub group: u16,
    pub element: u16,
}

impl Tag {
    pub const fn new(group: u16, element: u16) -> Self {
        Tag { group, element }
    }

    /// Odd groups are reserved for private (vendor) attributes.
    pub fn is_private(self) -> bool {
        self.group % 2 == 1
    }

    pub fn is_file_meta(self) -> bool {
        self.group == 0x0002
    }

    pub fn is_command(self) -> bool {
        self.group == 0x0000
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.group, self.element)
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Tag {
    type Err = Error;

    /// Accepts `(gggg,eeee)` with hexadecimal digits in either case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidTag(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (g, e) = inner.split_once(',').ok_or_else(bad)?;
        let (g, e) = (g.trim(), e.trim());
        if g.len() != 4 || e.len() != 4 {
            return Err(bad());
        }
        let group = u16::from_str_radix(g, 16).map_err(|_| bad())?;
        let element = u16::from_str_radix(e, 16).map_err(|_| bad())?;
        Ok(Tag { group, element })
    }
}

/// Tags used throughout the crate.
pub mod tags {
    use super::Tag;

    pub const COMMAND_GROUP_LENGTH: Tag = Tag::new(0x0000, 0x0000);
    pub const AFFECTED_SOP_CLASS_UID: Tag = Tag::new(0x0000, 0x0002);
    pub const COMMAND_FIELD: Tag = Tag::new(0x0000, 0x0100);
    pub const MESSAGE_ID: Tag = Tag::new(0x0000, 0x0110);
    pub const MESSAGE_ID_BEING_RESPONDED_TO: Tag = Tag::new(0x0000, 0x0120);
    pub const PRIORITY: Tag = Tag::new(0x0000, 0x0700);
    pub const COMMAND_DATA_SET_TYPE: Tag = Tag::new(0x0000, 0x0800);
    pub const STATUS: Tag = Tag::new(0x0000, 0x0900);
    pub const ERROR_COMMENT: Tag = Tag::new(0x0000, 0x0902);
    pub const AFFECTED_SOP_INSTANCE_UID: Tag = Tag::new(0x0000, 0x1000);

    pub const FILE_META_GROUP_LENGTH: Tag = Tag::new(0x0002, 0x0000);
    pub const FILE_META_VERSION: Tag = Tag::new(0x0002, 0x0001);
    pub const MEDIA_STORAGE_SOP_CLASS_UID: Tag = Tag::new(0x0002, 0x0002);
    pub const MEDIA_STORAGE_SOP_INSTANCE_UID: Tag = Tag::new(0x0002, 0x0003);
    pub const TRANSFER_SYNTAX_UID: Tag = Tag::new(0x0002, 0x0010);
    pub const IMPLEMENTATION_CLASS_UID: Tag = Tag::new(0x0002, 0x0012);
    pub const IMPLEMENTATION_VERSION_NAME: Tag = Tag::new(0x0002, 0x0013);
    pub const SOURCE_AE_TITLE: Tag = Tag::new(0x0002, 0x0016);

    pub const SPECIFIC_CHARACTER_SET: Tag = Tag::new(0x0008, 0x0005);
    pub const INSTANCE_CREATION_DATE: Tag = Tag::new(0x0008, 0x0012);
    pub const INSTANCE_CREATION_TIME: Tag = Tag::new(0x0008, 0x0013);
    pub const SOP_CLASS_UID: Tag = Tag::new(0x0008, 0x0016);
    pub const SOP_INSTANCE_UID: Tag = Tag::new(0x0008, 0x0018);
    pub const STUDY_DATE: Tag = Tag::new(0x0008, 0x0020);
    pub const SERIES_DATE: Tag = Tag::new(0x0008, 0x0021);
    pub const CONTENT_DATE: Tag = Tag::new(0x0008, 0x0023);
    pub const STUDY_TIME: Tag = Tag::new(0x0008, 0x0030);
    pub const CONTENT_TIME: Tag = Tag::new(0x0008, 0x0033);
    pub const ACCESSION_NUMBER: Tag = Tag::new(0x0008, 0x0050);
    pub const MODALITY: Tag = Tag::new(0x0008, 0x0060);
    pub const CONVERSION_TYPE: Tag = Tag::new(0x0008, 0x0064);
    pub const MANUFACTURER: Tag = Tag::new(0x0008, 0x0070);
    pub const INSTITUTION_NAME: Tag = Tag::new(0x0008, 0x0080);
    pub const REFERRING_PHYSICIAN_NAME: Tag = Tag::new(0x0008, 0x0090);
    pub const CODE_VALUE: Tag = Tag::new(0x0008, 0x0100);
    pub const CODING_SCHEME_DESIGNATOR: Tag = Tag::new(0x0008, 0x0102);
    pub const CODE_MEANING: Tag = Tag::new(0x0008, 0x0104);
    pub const STUDY_DESCRIPTION: Tag = Tag::new(0x0008, 0x1030);
    pub const SERIES_DESCRIPTION: Tag = Tag::new(0x0008, 0x103E);
    pub const MANUFACTURER_MODEL_NAME: Tag = Tag::new(0x0008, 0x1090);

    pub const PATIENT_NAME: Tag = Tag::new(0x0010, 0x0010);
    pub const PATIENT_ID: Tag = Tag::new(0x0010, 0x0020);
    pub const PATIENT_BIRTH_DATE: Tag = Tag::new(0x0010, 0x0030);
    pub const PATIENT_SEX: Tag = Tag::new(0x0010, 0x0040);

    pub const SLICE_THICKNESS: Tag = Tag::new(0x0018, 0x0050);

    pub const STUDY_INSTANCE_UID: Tag = Tag::new(0x0020, 0x000D);
    pub const SERIES_INSTANCE_UID: Tag = Tag::new(0x0020, 0x000E);
    pub const STUDY_ID: Tag = Tag::new(0x0020, 0x0010);
    pub const SERIES_NUMBER: Tag = Tag::new(0x0020, 0x0011);
    pub const INSTANCE_NUMBER: Tag = Tag::new(0x0020, 0x0013);
    pub const IMAGE_POSITION_PATIENT: Tag = Tag::new(0x0020, 0x0032);
    pub const IMAGE_ORIENTATION_PATIENT: Tag = Tag::new(0x0020, 0x0037);

    pub const SAMPLES_PER_PIXEL: Tag = Tag::new(0x0028, 0x0002);
    pub const PHOTOMETRIC_INTERPRETATION: Tag = Tag::new(0x0028, 0x0004);
    pub const ROWS: Tag = Tag::new(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag::new(0x0028, 0x0011);
    pub const PIXEL_SPACING: Tag = Tag::new(0x0028, 0x0030);
    pub const BITS_ALLOCATED: Tag = Tag::new(0x0028, 0x0100);
    pub const BITS_STORED: Tag = Tag::new(0x0028, 0x0101);
    pub const HIGH_BIT: Tag = Tag::new(0x0028, 0x0102);
    pub const PIXEL_REPRESENTATION: Tag = Tag::new(0x0028, 0x0103);

    pub const REQUESTED_PROCEDURE_DESCRIPTION: Tag = Tag::new(0x0032, 0x1060);

    pub const MEASUREMENT_UNITS_CODE_SEQUENCE: Tag = Tag::new(0x0040, 0x08EA);
    pub const RELATIONSHIP_TYPE: Tag = Tag::new(0x0040, 0xA010);
    pub const VALUE_TYPE: Tag = Tag::new(0x0040, 0xA040);
    pub const CONCEPT_NAME_CODE_SEQUENCE: Tag = Tag::new(0x0040, 0xA043);
    pub const CONTINUITY_OF_CONTENT: Tag = Tag::new(0x0040, 0xA050);
    pub const TEXT_VALUE: Tag = Tag::new(0x0040, 0xA160);
    pub const CONCEPT_CODE_SEQUENCE: Tag = Tag::new(0x0040, 0xA168);
    pub const MEASURED_VALUE_SEQUENCE: Tag = Tag::new(0x0040, 0xA300);
    pub const NUMERIC_VALUE: Tag = Tag::new(0x0040, 0xA30A);
    pub const COMPLETION_FLAG: Tag = Tag::new(0x0040, 0xA491);
    pub const VERIFICATION_FLAG: Tag = Tag::new(0x0040, 0xA493);
    pub const CONTENT_SEQUENCE: Tag = Tag::new(0x0040, 0xA730);

    pub const ALGORITHM_NAME: Tag = Tag::new(0x0066, 0x0036);
    pub const GRAPHIC_DATA: Tag = Tag::new(0x0070, 0x0022);
    pub const GRAPHIC_TYPE: Tag = Tag::new(0x0070, 0x0023);

    pub const PIXEL_DATA: Tag = Tag::new(0x7FE0, 0x0010);

    pub const ITEM: Tag = Tag::new(0xFFFE, 0xE000);
    pub const ITEM_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE00D);
    pub const SEQUENCE_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE0DD);
}
