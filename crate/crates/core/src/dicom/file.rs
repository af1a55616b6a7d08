//! Part 10 file framing: preamble, `DICM` magic, explicit VR file meta group.

use std::path::Path;

use super::codec::{write_element, Decoder, TransferSyntax};
use super::{tags, DataElement, DataSet, Error, Vr};

pub const IMPLEMENTATION_CLASS_UID: &str = "2.25.302113868142749184117396547339126549317";
pub const IMPLEMENTATION_VERSION_NAME: &str = "FLOWGATE_01";

const PREAMBLE_LEN: usize = 128;
const MAGIC: &[u8; 4] = b"DICM";

#[derive(Clone, Debug, PartialEq)]
pub struct DicomFile {
    pub preamble: [u8; PREAMBLE_LEN],
    /// Group 0002 without the group length, which is derived on write.
    pub file_meta: DataSet,
    pub dataset: DataSet,
    pub transfer_syntax: String,
}

impl DicomFile {
    /// Wraps a dataset, synthesizing file meta from its SOP class/instance.
    pub fn new(
        sop_class_uid: &str,
        sop_instance_uid: &str,
        transfer_syntax: &str,
        dataset: DataSet,
    ) -> Self {
        let mut meta = DataSet::new();
        meta.put(DataElement::new(tags::FILE_META_VERSION, Vr::OB, vec![0x00, 0x01]));
        meta.set_text(tags::MEDIA_STORAGE_SOP_CLASS_UID, Vr::UI, sop_class_uid);
        meta.set_text(tags::MEDIA_STORAGE_SOP_INSTANCE_UID, Vr::UI, sop_instance_uid);
        meta.set_text(tags::TRANSFER_SYNTAX_UID, Vr::UI, transfer_syntax);
        meta.set_text(tags::IMPLEMENTATION_CLASS_UID, Vr::UI, IMPLEMENTATION_CLASS_UID);
        meta.set_text(tags::IMPLEMENTATION_VERSION_NAME, Vr::SH, IMPLEMENTATION_VERSION_NAME);
        DicomFile {
            preamble: [0; PREAMBLE_LEN],
            file_meta: meta,
            dataset,
            transfer_syntax: transfer_syntax.to_string(),
        }
    }

    /// Wraps a dataset using its own (0008,0016)/(0008,0018).
    pub fn from_dataset(dataset: DataSet, transfer_syntax: &str) -> Result<Self, Error> {
        let class = dataset
            .get_string(tags::SOP_CLASS_UID)
            .ok_or_else(|| Error::InvariantViolation("dataset lacks SOPClassUID".into()))?;
        let inst = dataset
            .get_string(tags::SOP_INSTANCE_UID)
            .ok_or_else(|| Error::InvariantViolation("dataset lacks SOPInstanceUID".into()))?;
        Ok(Self::new(&class, &inst, transfer_syntax, dataset))
    }

    pub fn sop_class_uid(&self) -> Option<&str> {
        self.file_meta
            .get_str(tags::MEDIA_STORAGE_SOP_CLASS_UID)
            .or_else(|| self.dataset.get_str(tags::SOP_CLASS_UID))
    }

    pub fn sop_instance_uid(&self) -> Option<&str> {
        self.file_meta
            .get_str(tags::MEDIA_STORAGE_SOP_INSTANCE_UID)
            .or_else(|| self.dataset.get_str(tags::SOP_INSTANCE_UID))
    }

    pub fn set_transfer_syntax(&mut self, uid: &str) {
        self.transfer_syntax = uid.to_string();
        self.file_meta.set_text(tags::TRANSFER_SYNTAX_UID, Vr::UI, uid);
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let bytes = std::fs::read(path)?;
        parse_part10(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let bytes = serialize_part10(self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

pub fn parse_part10(bytes: &[u8]) -> Result<DicomFile, Error> {
    if bytes.len() < PREAMBLE_LEN + MAGIC.len() {
        return Err(Error::TruncatedElement {
            tag: None,
            offset: bytes.len(),
        });
    }
    if &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] != MAGIC {
        return Err(Error::MissingMagic);
    }
    let mut preamble = [0u8; PREAMBLE_LEN];
    preamble.copy_from_slice(&bytes[..PREAMBLE_LEN]);

    let body = &bytes[PREAMBLE_LEN + 4..];
    let mut dec = Decoder::new(body, TransferSyntax::ExplicitVrLittleEndian);
    let mut file_meta = DataSet::new();
    while dec.peek_tag().is_some_and(|t| t.is_file_meta()) {
        file_meta.put(dec.read_element()?);
    }
    file_meta.remove(tags::FILE_META_GROUP_LENGTH);

    let ts_uid = file_meta
        .get_string(tags::TRANSFER_SYNTAX_UID)
        .ok_or_else(|| Error::InvariantViolation("file meta lacks TransferSyntaxUID".into()))?;
    let ts = TransferSyntax::from_uid(&ts_uid)?;

    let rest = &body[dec.position()..];
    let mut dec = Decoder::new(rest, ts);
    let dataset = dec.read_dataset(Some(rest.len()))?;
    for w in &dec.warnings {
        log::warn!("{w}");
    }
    Ok(DicomFile {
        preamble,
        file_meta,
        dataset,
        transfer_syntax: ts_uid,
    })
}

pub fn serialize_part10(file: &DicomFile) -> Result<Vec<u8>, Error> {
    for (tag, name) in [
        (tags::MEDIA_STORAGE_SOP_CLASS_UID, "MediaStorageSOPClassUID"),
        (tags::MEDIA_STORAGE_SOP_INSTANCE_UID, "MediaStorageSOPInstanceUID"),
        (tags::TRANSFER_SYNTAX_UID, "TransferSyntaxUID"),
    ] {
        if !file.file_meta.contains(tag) {
            return Err(Error::InvariantViolation(format!("file meta lacks {name}")));
        }
    }
    if file.file_meta.get_str(tags::TRANSFER_SYNTAX_UID) != Some(file.transfer_syntax.as_str()) {
        return Err(Error::InvariantViolation(
            "file meta TransferSyntaxUID disagrees with transfer_syntax".into(),
        ));
    }
    if let Some(t) = file.file_meta.tags().find(|t| !t.is_file_meta()) {
        return Err(Error::InvariantViolation(format!("{t} in file meta")));
    }
    let ts = TransferSyntax::from_uid(&file.transfer_syntax)?;
    if let Some(t) = file.dataset.tags().find(|t| t.is_file_meta()) {
        return Err(Error::InvariantViolation(format!("{t} in dataset body")));
    }

    let mut meta = Vec::new();
    for e in file.file_meta.iter().filter(|e| e.tag != tags::FILE_META_GROUP_LENGTH) {
        write_element(&mut meta, e, TransferSyntax::ExplicitVrLittleEndian)?;
    }
    let mut out = Vec::with_capacity(PREAMBLE_LEN + 16 + meta.len());
    out.extend_from_slice(&file.preamble);
    out.extend_from_slice(MAGIC);
    let group_len = u32::try_from(meta.len())
        .map_err(|_| Error::InvariantViolation("file meta too long".into()))?;
    write_element(
        &mut out,
        &DataElement::u32(tags::FILE_META_GROUP_LENGTH, group_len),
        TransferSyntax::ExplicitVrLittleEndian,
    )?;
    out.extend_from_slice(&meta);
    super::codec::write_dataset(&mut out, &file.dataset, ts)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::{EXPLICIT_VR_LE, IMPLICIT_VR_LE};

    fn sample(ts: &str) -> DicomFile {
        let mut ds = DataSet::new();
        ds.set_text(tags::SOP_CLASS_UID, Vr::UI, "1.2.840.10008.5.1.4.1.1.2");
        ds.set_text(tags::SOP_INSTANCE_UID, Vr::UI, "1.2.3.4.5");
        ds.set_text(tags::MODALITY, Vr::CS, "CT");
        ds.set_text(tags::PATIENT_NAME, Vr::PN, "DOE^JANE");
        DicomFile::from_dataset(ds, ts).unwrap()
    }

    #[test]
    fn round_trip_both_syntaxes() {
        for ts in [EXPLICIT_VR_LE, IMPLICIT_VR_LE] {
            let f = sample(ts);
            let bytes = serialize_part10(&f).unwrap();
            assert_eq!(&bytes[128..132], b"DICM");
            let back = parse_part10(&bytes).unwrap();
            assert_eq!(back, f);
            assert_eq!(serialize_part10(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn empty_dataset_is_header_plus_meta() {
        let f = DicomFile::new("1.2", "1.2.3", EXPLICIT_VR_LE, DataSet::new());
        let bytes = serialize_part10(&f).unwrap();
        let group_len = u32::from_le_bytes(bytes[140..144].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 132 + 12 + group_len);
        assert_eq!(parse_part10(&bytes).unwrap().dataset, DataSet::new());
    }

    #[test]
    fn missing_magic() {
        let mut bytes = serialize_part10(&sample(EXPLICIT_VR_LE)).unwrap();
        bytes[128..132].fill(0);
        assert!(matches!(parse_part10(&bytes), Err(Error::MissingMagic)));
    }

    #[test]
    fn too_short() {
        assert!(matches!(parse_part10(&[0u8; 100]), Err(Error::TruncatedElement { .. })));
    }

    #[test]
    fn compressed_syntax_rejected() {
        let mut f = sample(EXPLICIT_VR_LE);
        f.set_transfer_syntax("1.2.840.10008.1.2.4.70");
        assert!(serialize_part10(&f).is_err());

        let mut bytes = vec![0u8; 128];
        bytes.extend_from_slice(b"DICM");
        for e in f.file_meta.iter() {
            write_element(&mut bytes, e, TransferSyntax::ExplicitVrLittleEndian).unwrap();
        }
        assert!(matches!(
            parse_part10(&bytes),
            Err(Error::UnsupportedTransferSyntax(uid)) if uid == "1.2.840.10008.1.2.4.70"
        ));
    }

    #[test]
    fn serialization_is_deterministic() {
        let f = sample(EXPLICIT_VR_LE);
        assert_eq!(serialize_part10(&f).unwrap(), serialize_part10(&f).unwrap());
    }

    #[test]
    fn meta_missing_required_element() {
        let mut f = sample(EXPLICIT_VR_LE);
        f.file_meta.remove(tags::MEDIA_STORAGE_SOP_CLASS_UID);
        assert!(matches!(serialize_part10(&f), Err(Error::InvariantViolation(_))));
    }
}
