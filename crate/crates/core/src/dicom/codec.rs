//! Little-endian dataset codec for the implicit and explicit VR transfer syntaxes.

use super::{dict_vr, tags, DataElement, DataSet, Error, Tag, Value, Vr};

pub const IMPLICIT_VR_LE: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_LE: &str = "1.2.840.10008.1.2.1";

const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransferSyntax {
    ImplicitVrLittleEndian,
    ExplicitVrLittleEndian,
}

impl TransferSyntax {
    pub fn from_uid(uid: &str) -> Result<Self, Error> {
        match uid.trim_end_matches(['\0', ' ']) {
            IMPLICIT_VR_LE => Ok(TransferSyntax::ImplicitVrLittleEndian),
            EXPLICIT_VR_LE => Ok(TransferSyntax::ExplicitVrLittleEndian),
            other => Err(Error::UnsupportedTransferSyntax(other.to_string())),
        }
    }

    pub fn uid(self) -> &'static str {
        match self {
            TransferSyntax::ImplicitVrLittleEndian => IMPLICIT_VR_LE,
            TransferSyntax::ExplicitVrLittleEndian => EXPLICIT_VR_LE,
        }
    }

    pub fn is_explicit(self) -> bool {
        self == TransferSyntax::ExplicitVrLittleEndian
    }
}

/// Decoding issues that did not prevent the parse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Warning {
    DuplicateTag(Tag),
    UnknownVr { tag: Tag, code: [u8; 2] },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::DuplicateTag(t) => write!(f, "duplicate tag {t}, last occurrence kept"),
            Warning::UnknownVr { tag, code } => {
                write!(f, "unknown VR {:?} on {tag}, read as UN", String::from_utf8_lossy(code))
            }
        }
    }
}

pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    explicit: bool,
    pub warnings: Vec<Warning>,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], ts: TransferSyntax) -> Self {
        Decoder {
            buf,
            pos: 0,
            explicit: ts.is_explicit(),
            warnings: Vec::new(),
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize, tag: Option<Tag>) -> Result<&'a [u8], Error> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedElement {
                tag,
                offset: self.pos,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, tag: Option<Tag>) -> Result<u16, Error> {
        let b = self.take(2, tag)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, tag: Option<Tag>) -> Result<u32, Error> {
        let b = self.take(4, tag)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn peek_tag(&self) -> Option<Tag> {
        let b = self.buf.get(self.pos..self.pos + 4)?;
        Some(Tag::new(
            u16::from_le_bytes([b[0], b[1]]),
            u16::from_le_bytes([b[2], b[3]]),
        ))
    }

    fn tag(&mut self) -> Result<Tag, Error> {
        let g = self.u16(None)?;
        let e = self.u16(None)?;
        Ok(Tag::new(g, e))
    }

    /// Reads elements until `end` (exclusive) or, when `end` is `None`,
    /// until an item delimiter or the end of the buffer.
    pub fn read_dataset(&mut self, end: Option<usize>) -> Result<DataSet, Error> {
        let mut ds = DataSet::new();
        loop {
            match end {
                Some(end) if self.pos >= end => break,
                None if self.at_end() => break,
                _ => {}
            }
            if self.peek_tag() == Some(tags::ITEM_DELIMITATION) {
                if end.is_none() {
                    self.pos += 4;
                    self.u32(Some(tags::ITEM_DELIMITATION))?;
                    break;
                }
                return Err(Error::InvariantViolation(format!(
                    "item delimiter inside defined-length item at offset {}",
                    self.pos
                )));
            }
            let element = self.read_element()?;
            if let Some(old) = ds.put(element) {
                self.warnings.push(Warning::DuplicateTag(old.tag));
            }
        }
        if let Some(end) = end {
            if self.pos != end {
                return Err(Error::TruncatedElement {
                    tag: None,
                    offset: self.pos,
                });
            }
        }
        Ok(ds)
    }

    /// Reads one element header and value.
    pub fn read_element(&mut self) -> Result<DataElement, Error> {
        let tag = self.tag()?;
        let (vr, len) = if self.explicit && tag.group != 0xFFFE {
            let code = self.take(2, Some(tag))?;
            let code = [code[0], code[1]];
            match Vr::from_bytes(code) {
                Some(vr) if vr.has_long_length() => {
                    self.take(2, Some(tag))?;
                    (vr, self.u32(Some(tag))?)
                }
                Some(vr) => (vr, self.u16(Some(tag))? as u32),
                None => {
                    self.warnings.push(Warning::UnknownVr { tag, code });
                    self.take(2, Some(tag))?;
                    (Vr::UN, self.u32(Some(tag))?)
                }
            }
        } else {
            (dict_vr(tag), self.u32(Some(tag))?)
        };

        if vr == Vr::SQ || len == UNDEFINED_LENGTH {
            if len == UNDEFINED_LENGTH && !matches!(vr, Vr::SQ | Vr::UN) {
                return Err(Error::InvariantViolation(format!(
                    "undefined length on non-sequence element {tag}"
                )));
            }
            let explicit = self.explicit;
            if vr == Vr::UN {
                // undefined-length UN carries an implicit VR sequence
                self.explicit = false;
            }
            let items = self.read_items(tag, len);
            self.explicit = explicit;
            return Ok(DataElement::sequence(tag, items?));
        }

        let bytes = self.take(len as usize, Some(tag))?.to_vec();
        Ok(DataElement {
            tag,
            vr,
            value: Value::Bytes(bytes),
        })
    }

    fn read_items(&mut self, tag: Tag, len: u32) -> Result<Vec<DataSet>, Error> {
        let end = (len != UNDEFINED_LENGTH).then(|| self.pos + len as usize);
        if let Some(end) = end {
            if end > self.buf.len() {
                return Err(Error::TruncatedElement {
                    tag: Some(tag),
                    offset: self.pos,
                });
            }
        }
        let mut items = Vec::new();
        loop {
            match end {
                Some(end) if self.pos >= end => break,
                _ => {}
            }
            let item_tag = self.tag()?;
            let item_len = self.u32(Some(item_tag))?;
            match item_tag {
                tags::SEQUENCE_DELIMITATION if end.is_none() => break,
                tags::ITEM => {
                    let item_end = if item_len == UNDEFINED_LENGTH {
                        None
                    } else {
                        let e = self.pos + item_len as usize;
                        if e > self.buf.len() {
                            return Err(Error::TruncatedElement {
                                tag: Some(tag),
                                offset: self.pos,
                            });
                        }
                        Some(e)
                    };
                    items.push(self.read_dataset(item_end)?);
                }
                other => {
                    return Err(Error::InvariantViolation(format!(
                        "expected item in sequence {tag}, found {other}"
                    )))
                }
            }
        }
        if let Some(end) = end {
            if self.pos != end {
                return Err(Error::TruncatedElement {
                    tag: Some(tag),
                    offset: self.pos,
                });
            }
        }
        Ok(items)
    }
}

/// Decodes a bare dataset. Unknown and private tags are kept (as `UN` in
/// implicit VR); duplicate tags keep the last occurrence.
pub fn parse_dataset(bytes: &[u8], transfer_syntax: &str) -> Result<DataSet, Error> {
    let (ds, warnings) = parse_dataset_with_warnings(bytes, transfer_syntax)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

pub fn parse_dataset_with_warnings(
    bytes: &[u8],
    transfer_syntax: &str,
) -> Result<(DataSet, Vec<Warning>), Error> {
    let ts = TransferSyntax::from_uid(transfer_syntax)?;
    let mut dec = Decoder::new(bytes, ts);
    let ds = dec.read_dataset(Some(bytes.len()))?;
    Ok((ds, dec.warnings))
}

pub fn serialize_dataset(ds: &DataSet, transfer_syntax: &str) -> Result<Vec<u8>, Error> {
    let ts = TransferSyntax::from_uid(transfer_syntax)?;
    let mut out = Vec::new();
    write_dataset(&mut out, ds, ts)?;
    Ok(out)
}

pub(crate) fn write_dataset(out: &mut Vec<u8>, ds: &DataSet, ts: TransferSyntax) -> Result<(), Error> {
    for e in ds {
        write_element(out, e, ts)?;
    }
    Ok(())
}

pub(crate) fn write_element(out: &mut Vec<u8>, e: &DataElement, ts: TransferSyntax) -> Result<(), Error> {
    let body = match &e.value {
        Value::Bytes(b) => {
            if b.len() % 2 == 1 {
                return Err(Error::InvariantViolation(format!(
                    "{} value of {} has odd length {}",
                    e.vr,
                    e.tag,
                    b.len()
                )));
            }
            std::borrow::Cow::Borrowed(b.as_slice())
        }
        Value::Sequence(items) => {
            let mut buf = Vec::new();
            for item in items {
                let mut inner = Vec::new();
                write_dataset(&mut inner, item, ts)?;
                write_tag(&mut buf, tags::ITEM);
                buf.extend_from_slice(&len32(e.tag, inner.len())?.to_le_bytes());
                buf.extend_from_slice(&inner);
            }
            std::borrow::Cow::Owned(buf)
        }
    };
    if e.vr == Vr::SQ && matches!(e.value, Value::Bytes(_)) {
        return Err(Error::InvariantViolation(format!("SQ element {} holds raw bytes", e.tag)));
    }
    write_tag(out, e.tag);
    if ts.is_explicit() {
        out.extend_from_slice(e.vr.code().as_bytes());
        if e.vr.has_long_length() {
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&len32(e.tag, body.len())?.to_le_bytes());
        } else {
            let len = u16::try_from(body.len()).map_err(|_| {
                Error::InvariantViolation(format!(
                    "{} value of {} exceeds 65534 bytes",
                    e.vr, e.tag
                ))
            })?;
            out.extend_from_slice(&len.to_le_bytes());
        }
    } else {
        out.extend_from_slice(&len32(e.tag, body.len())?.to_le_bytes());
    }
    out.extend_from_slice(&body);
    Ok(())
}

fn len32(tag: Tag, n: usize) -> Result<u32, Error> {
    u32::try_from(n)
        .ok()
        .filter(|&n| n != UNDEFINED_LENGTH)
        .ok_or_else(|| Error::InvariantViolation(format!("{tag} value too long")))
}

fn write_tag(out: &mut Vec<u8>, tag: Tag) {
    out.extend_from_slice(&tag.group.to_le_bytes());
    out.extend_from_slice(&tag.element.to_le_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_encoded_explicit_element() {
        // (0008,0060) "CS" len 2 "CT"
        let bytes = [0x08, 0x00, 0x60, 0x00, b'C', b'S', 0x02, 0x00, b'C', b'T'];
        let ds = parse_dataset(&bytes, EXPLICIT_VR_LE).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.get_str(tags::MODALITY), Some("CT"));
        assert_eq!(ds.get(tags::MODALITY).unwrap().vr, Vr::CS);
        assert_eq!(serialize_dataset(&ds, EXPLICIT_VR_LE).unwrap(), bytes);
    }

    #[test]
    fn empty_input_and_output() {
        assert!(parse_dataset(&[], IMPLICIT_VR_LE).unwrap().is_empty());
        assert!(serialize_dataset(&DataSet::new(), EXPLICIT_VR_LE).unwrap().is_empty());
    }

    #[test]
    fn odd_text_value_is_space_padded() {
        let mut ds = DataSet::new();
        ds.set_text(tags::MODALITY, Vr::CS, "CT1");
        let bytes = serialize_dataset(&ds, EXPLICIT_VR_LE).unwrap();
        assert_eq!(&bytes[6..8], &4u16.to_le_bytes());
        assert_eq!(&bytes[8..], b"CT1 ");
    }

    #[test]
    fn private_tag_in_implicit_vr_is_un() {
        let mut bytes = vec![0x09, 0x00, 0x10, 0x00];
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(b"ACME");
        let ds = parse_dataset(&bytes, IMPLICIT_VR_LE).unwrap();
        let e = ds.get(Tag::new(0x0009, 0x0010)).unwrap();
        assert_eq!(e.vr, Vr::UN);
        assert_eq!(e.bytes().unwrap(), b"ACME");
    }

    #[test]
    fn truncated_value() {
        let bytes = [0x08, 0x00, 0x60, 0x00, b'C', b'S', 0x04, 0x00, b'C', b'T'];
        assert!(matches!(
            parse_dataset(&bytes, EXPLICIT_VR_LE),
            Err(Error::TruncatedElement { tag: Some(t), .. }) if t == tags::MODALITY
        ));
        assert!(matches!(
            parse_dataset(&bytes[..3], EXPLICIT_VR_LE),
            Err(Error::TruncatedElement { .. })
        ));
    }

    #[test]
    fn unsupported_syntax() {
        assert!(matches!(
            parse_dataset(&[], "1.2.840.10008.1.2.4.70"),
            Err(Error::UnsupportedTransferSyntax(_))
        ));
    }

    #[test]
    fn duplicate_tag_last_wins() {
        let mut bytes = Vec::new();
        for v in [b"CT", b"MR"] {
            bytes.extend_from_slice(&[0x08, 0x00, 0x60, 0x00, b'C', b'S', 0x02, 0x00]);
            bytes.extend_from_slice(v);
        }
        let (ds, warnings) = parse_dataset_with_warnings(&bytes, EXPLICIT_VR_LE).unwrap();
        assert_eq!(ds.get_str(tags::MODALITY), Some("MR"));
        assert_eq!(warnings, vec![Warning::DuplicateTag(tags::MODALITY)]);
    }

    fn code_item(value: &str) -> DataSet {
        let mut item = DataSet::new();
        item.set_text(tags::CODE_VALUE, Vr::SH, value);
        item.set_text(tags::CODING_SCHEME_DESIGNATOR, Vr::SH, "DCM");
        item
    }

    #[test]
    fn undefined_length_sequence_is_reencoded_with_lengths() {
        for ts in [EXPLICIT_VR_LE, IMPLICIT_VR_LE] {
            let t = TransferSyntax::from_uid(ts).unwrap();
            let item = code_item("126000");
            let mut item_bytes = Vec::new();
            write_dataset(&mut item_bytes, &item, t).unwrap();

            let mut bytes = Vec::new();
            write_tag(&mut bytes, tags::CONCEPT_NAME_CODE_SEQUENCE);
            if t.is_explicit() {
                bytes.extend_from_slice(b"SQ\0\0");
            }
            bytes.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
            write_tag(&mut bytes, tags::ITEM);
            bytes.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
            bytes.extend_from_slice(&item_bytes);
            write_tag(&mut bytes, tags::ITEM_DELIMITATION);
            bytes.extend_from_slice(&0u32.to_le_bytes());
            write_tag(&mut bytes, tags::SEQUENCE_DELIMITATION);
            bytes.extend_from_slice(&0u32.to_le_bytes());

            let ds = parse_dataset(&bytes, ts).unwrap();
            let items = ds.get_items(tags::CONCEPT_NAME_CODE_SEQUENCE).unwrap();
            assert_eq!(items, std::slice::from_ref(&item));

            let canonical = serialize_dataset(&ds, ts).unwrap();
            assert!(canonical.len() < bytes.len());
            assert_eq!(parse_dataset(&canonical, ts).unwrap(), ds);
        }
    }

    #[test]
    fn nested_sequences_round_trip() {
        let mut inner = code_item("X");
        inner.put(DataElement::sequence(tags::CONCEPT_CODE_SEQUENCE, vec![code_item("Y")]));
        let mut ds = DataSet::new();
        ds.put(DataElement::sequence(tags::CONTENT_SEQUENCE, vec![inner, DataSet::new()]));
        for ts in [EXPLICIT_VR_LE, IMPLICIT_VR_LE] {
            let b = serialize_dataset(&ds, ts).unwrap();
            assert_eq!(parse_dataset(&b, ts).unwrap(), ds);
        }
    }

    #[test]
    fn odd_binary_value_cannot_be_serialized() {
        let mut ds = DataSet::new();
        ds.put(DataElement::new(tags::PIXEL_DATA, Vr::OW, vec![1, 2, 3]));
        assert!(matches!(
            serialize_dataset(&ds, EXPLICIT_VR_LE),
            Err(Error::InvariantViolation(_))
        ));
    }
}
