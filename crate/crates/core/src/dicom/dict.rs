//! Built-in data dictionary covering every attribute this crate reads or writes.

use super::{Tag, Vr};

const fn e(group: u16, element: u16, vr: Vr, keyword: &'static str) -> (Tag, Vr, &'static str) {
    (Tag::new(group, element), vr, keyword)
}

// Sorted by tag; `lookup` relies on it.
static ENTRIES: &[(Tag, Vr, &str)] = &[
    e(0x0000, 0x0000, Vr::UL, "CommandGroupLength"),
    e(0x0000, 0x0002, Vr::UI, "AffectedSOPClassUID"),
    e(0x0000, 0x0100, Vr::US, "CommandField"),
    e(0x0000, 0x0110, Vr::US, "MessageID"),
    e(0x0000, 0x0120, Vr::US, "MessageIDBeingRespondedTo"),
    e(0x0000, 0x0600, Vr::AE, "MoveDestination"),
    e(0x0000, 0x0700, Vr::US, "Priority"),
    e(0x0000, 0x0800, Vr::US, "CommandDataSetType"),
    e(0x0000, 0x0900, Vr::US, "Status"),
    e(0x0000, 0x0902, Vr::LO, "ErrorComment"),
    e(0x0000, 0x1000, Vr::UI, "AffectedSOPInstanceUID"),
    e(0x0000, 0x1030, Vr::AE, "MoveOriginatorApplicationEntityTitle"),
    e(0x0000, 0x1031, Vr::US, "MoveOriginatorMessageID"),
    e(0x0002, 0x0000, Vr::UL, "FileMetaInformationGroupLength"),
    e(0x0002, 0x0001, Vr::OB, "FileMetaInformationVersion"),
    e(0x0002, 0x0002, Vr::UI, "MediaStorageSOPClassUID"),
    e(0x0002, 0x0003, Vr::UI, "MediaStorageSOPInstanceUID"),
    e(0x0002, 0x0010, Vr::UI, "TransferSyntaxUID"),
    e(0x0002, 0x0012, Vr::UI, "ImplementationClassUID"),
    e(0x0002, 0x0013, Vr::SH, "ImplementationVersionName"),
    e(0x0002, 0x0016, Vr::AE, "SourceApplicationEntityTitle"),
    e(0x0008, 0x0005, Vr::CS, "SpecificCharacterSet"),
    e(0x0008, 0x0012, Vr::DA, "InstanceCreationDate"),
    e(0x0008, 0x0013, Vr::TM, "InstanceCreationTime"),
    e(0x0008, 0x0016, Vr::UI, "SOPClassUID"),
    e(0x0008, 0x0018, Vr::UI, "SOPInstanceUID"),
    e(0x0008, 0x0020, Vr::DA, "StudyDate"),
    e(0x0008, 0x0021, Vr::DA, "SeriesDate"),
    e(0x0008, 0x0023, Vr::DA, "ContentDate"),
    e(0x0008, 0x0030, Vr::TM, "StudyTime"),
    e(0x0008, 0x0033, Vr::TM, "ContentTime"),
    e(0x0008, 0x0050, Vr::SH, "AccessionNumber"),
    e(0x0008, 0x0060, Vr::CS, "Modality"),
    e(0x0008, 0x0064, Vr::CS, "ConversionType"),
    e(0x0008, 0x0070, Vr::LO, "Manufacturer"),
    e(0x0008, 0x0080, Vr::LO, "InstitutionName"),
    e(0x0008, 0x0090, Vr::PN, "ReferringPhysicianName"),
    e(0x0008, 0x0100, Vr::SH, "CodeValue"),
    e(0x0008, 0x0102, Vr::SH, "CodingSchemeDesignator"),
    e(0x0008, 0x0104, Vr::LO, "CodeMeaning"),
    e(0x0008, 0x1030, Vr::LO, "StudyDescription"),
    e(0x0008, 0x103E, Vr::LO, "SeriesDescription"),
    e(0x0008, 0x1090, Vr::LO, "ManufacturerModelName"),
    e(0x0010, 0x0010, Vr::PN, "PatientName"),
    e(0x0010, 0x0020, Vr::LO, "PatientID"),
    e(0x0010, 0x0030, Vr::DA, "PatientBirthDate"),
    e(0x0010, 0x0040, Vr::CS, "PatientSex"),
    e(0x0018, 0x0050, Vr::DS, "SliceThickness"),
    e(0x0020, 0x000D, Vr::UI, "StudyInstanceUID"),
    e(0x0020, 0x000E, Vr::UI, "SeriesInstanceUID"),
    e(0x0020, 0x0010, Vr::SH, "StudyID"),
    e(0x0020, 0x0011, Vr::IS, "SeriesNumber"),
    e(0x0020, 0x0013, Vr::IS, "InstanceNumber"),
    e(0x0020, 0x0032, Vr::DS, "ImagePositionPatient"),
    e(0x0020, 0x0037, Vr::DS, "ImageOrientationPatient"),
    e(0x0028, 0x0002, Vr::US, "SamplesPerPixel"),
    e(0x0028, 0x0004, Vr::CS, "PhotometricInterpretation"),
    e(0x0028, 0x0010, Vr::US, "Rows"),
    e(0x0028, 0x0011, Vr::US, "Columns"),
    e(0x0028, 0x0030, Vr::DS, "PixelSpacing"),
    e(0x0028, 0x0100, Vr::US, "BitsAllocated"),
    e(0x0028, 0x0101, Vr::US, "BitsStored"),
    e(0x0028, 0x0102, Vr::US, "HighBit"),
    e(0x0028, 0x0103, Vr::US, "PixelRepresentation"),
    e(0x0032, 0x1060, Vr::LO, "RequestedProcedureDescription"),
    e(0x0040, 0x08EA, Vr::SQ, "MeasurementUnitsCodeSequence"),
    e(0x0040, 0xA010, Vr::CS, "RelationshipType"),
    e(0x0040, 0xA040, Vr::CS, "ValueType"),
    e(0x0040, 0xA043, Vr::SQ, "ConceptNameCodeSequence"),
    e(0x0040, 0xA050, Vr::CS, "ContinuityOfContent"),
    e(0x0040, 0xA160, Vr::UT, "TextValue"),
    e(0x0040, 0xA168, Vr::SQ, "ConceptCodeSequence"),
    e(0x0040, 0xA300, Vr::SQ, "MeasuredValueSequence"),
    e(0x0040, 0xA30A, Vr::DS, "NumericValue"),
    e(0x0040, 0xA491, Vr::CS, "CompletionFlag"),
    e(0x0040, 0xA493, Vr::CS, "VerificationFlag"),
    e(0x0040, 0xA730, Vr::SQ, "ContentSequence"),
    e(0x0066, 0x0036, Vr::LO, "AlgorithmName"),
    e(0x0070, 0x0022, Vr::FL, "GraphicData"),
    e(0x0070, 0x0023, Vr::CS, "GraphicType"),
    e(0x7FE0, 0x0010, Vr::OW, "PixelData"),
];

fn lookup(tag: Tag) -> Option<&'static (Tag, Vr, &'static str)> {
    ENTRIES
        .binary_search_by(|(t, _, _)| t.cmp(&tag))
        .ok()
        .map(|i| &ENTRIES[i])
}

/// VR of a tag per the built-in dictionary; anything unknown (including all
/// private tags) resolves to `UN`.
pub fn dict_vr(tag: Tag) -> Vr {
    if tag.element == 0x0000 && tag.group != 0x0000 && tag.group != 0x0002 {
        // group length elements, retired but still seen in the wild
        return Vr::UL;
    }
    lookup(tag).map(|e| e.1).unwrap_or(Vr::UN)
}

pub fn keyword(tag: Tag) -> Option<&'static str> {
    lookup(tag).map(|e| e.2)
}

/// All dictionary tags, in ascending order.
pub fn known_tags() -> impl Iterator<Item = (Tag, Vr)> {
    ENTRIES.iter().map(|(t, v, _)| (*t, *v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::tags;

    #[test]
    fn entries_sorted_and_unique() {
        assert!(ENTRIES.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn standard_lookups() {
        assert_eq!(dict_vr(tags::MODALITY), Vr::CS);
        assert_eq!(dict_vr(tags::STUDY_INSTANCE_UID), Vr::UI);
        assert_eq!(dict_vr(tags::SLICE_THICKNESS), Vr::DS);
        assert_eq!(dict_vr(tags::CONTENT_SEQUENCE), Vr::SQ);
        assert_eq!(dict_vr(tags::PIXEL_DATA), Vr::OW);
        assert_eq!(dict_vr(tags::ROWS), Vr::US);
    }

    #[test]
    fn unknown_and_private_are_un() {
        assert_eq!(dict_vr(Tag::new(0x0009, 0x0001)), Vr::UN);
        assert_eq!(dict_vr(Tag::new(0x0009, 0x0010)), Vr::UN);
        assert_eq!(dict_vr(Tag::new(0x0008, 0x9999)), Vr::UN);
    }

    #[test]
    fn required_coverage() {
        let required = [
            (0x0002, 0x0000),
            (0x0002, 0x0001),
            (0x0002, 0x0002),
            (0x0002, 0x0003),
            (0x0002, 0x0010),
            (0x0008, 0x0016),
            (0x0008, 0x0018),
            (0x0008, 0x0020),
            (0x0008, 0x0050),
            (0x0008, 0x0060),
            (0x0008, 0x0080),
            (0x0008, 0x1030),
            (0x0008, 0x103E),
            (0x0010, 0x0010),
            (0x0010, 0x0020),
            (0x0010, 0x0030),
            (0x0018, 0x0050),
            (0x0020, 0x000D),
            (0x0020, 0x000E),
            (0x0020, 0x0013),
            (0x0020, 0x0032),
            (0x0020, 0x0037),
            (0x0028, 0x0010),
            (0x0028, 0x0011),
            (0x0028, 0x0100),
            (0x0028, 0x0101),
            (0x0028, 0x0102),
            (0x0028, 0x0103),
            (0x0040, 0xA040),
            (0x0040, 0xA043),
            (0x0040, 0xA050),
            (0x0040, 0xA168),
            (0x0040, 0xA730),
            (0x0040, 0xA160),
            (0x7FE0, 0x0010),
        ];
        for (g, e) in required {
            assert!(keyword(Tag::new(g, e)).is_some(), "({g:04X},{e:04X})");
        }
    }
}
