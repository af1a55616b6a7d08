use super::vr::Padding;
use super::{DataSet, Error, Tag, Vr};

/// Element payload: raw little-endian bytes, or nested items for `SQ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bytes(Vec<u8>),
    Sequence(Vec<DataSet>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataElement {
    pub tag: Tag,
    pub vr: Vr,
    pub value: Value,
}

fn pad(vr: Vr, mut bytes: Vec<u8>) -> Vec<u8> {
    if bytes.len() % 2 == 1 {
        match vr.padding() {
            Padding::Space => bytes.push(b' '),
            Padding::Null => bytes.push(0),
            Padding::None => {}
        }
    }
    bytes
}

fn trim_text(s: &str) -> &str {
    s.trim_end_matches([' ', '\0'])
}

impl DataElement {
    /// Builds an element from raw bytes, padding odd-length text and
    /// opaque values to even length.
    pub fn new(tag: Tag, vr: Vr, bytes: Vec<u8>) -> Self {
        DataElement {
            tag,
            vr,
            value: Value::Bytes(pad(vr, bytes)),
        }
    }

    pub fn text(tag: Tag, vr: Vr, value: &str) -> Self {
        Self::new(tag, vr, value.as_bytes().to_vec())
    }

    /// Multi-valued text joined with the DICOM value separator `\`.
    pub fn texts<S: AsRef<str>>(tag: Tag, vr: Vr, values: &[S]) -> Self {
        let joined = values.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join("\\");
        Self::text(tag, vr, &joined)
    }

    pub fn decimals(tag: Tag, values: &[f64]) -> Self {
        let strs: Vec<String> = values.iter().map(|v| format_ds(*v)).collect();
        Self::texts(tag, Vr::DS, &strs)
    }

    pub fn u16(tag: Tag, value: u16) -> Self {
        Self::new(tag, Vr::US, value.to_le_bytes().to_vec())
    }

    pub fn u32(tag: Tag, value: u32) -> Self {
        Self::new(tag, Vr::UL, value.to_le_bytes().to_vec())
    }

    pub fn f32s(tag: Tag, values: &[f32]) -> Self {
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(tag, Vr::FL, bytes)
    }

    pub fn sequence(tag: Tag, items: Vec<DataSet>) -> Self {
        DataElement {
            tag,
            vr: Vr::SQ,
            value: Value::Sequence(items),
        }
    }

    pub fn bytes(&self) -> Option<&[u8]> {
        match &self.value {
            Value::Bytes(b) => Some(b),
            Value::Sequence(_) => None,
        }
    }

    pub fn items(&self) -> Option<&[DataSet]> {
        match &self.value {
            Value::Sequence(items) => Some(items),
            Value::Bytes(_) => None,
        }
    }

    /// Text content with trailing padding removed. `None` for binary VRs.
    pub fn as_str(&self) -> Option<&str> {
        if !self.vr.is_text() && self.vr != Vr::UN {
            return None;
        }
        let b = self.bytes()?;
        let s = std::str::from_utf8(b).ok()?;
        Some(match self.vr {
            // leading spaces are insignificant for these
            Vr::DS | Vr::IS | Vr::AE | Vr::CS | Vr::DA | Vr::TM | Vr::DT | Vr::UI => {
                trim_text(s).trim_start()
            }
            _ => trim_text(s),
        })
    }

    /// All values of a multi-valued text element.
    pub fn as_strs(&self) -> Option<Vec<&str>> {
        let s = self.as_str()?;
        if s.is_empty() {
            return Some(Vec::new());
        }
        Some(s.split('\\').map(|p| p.trim_matches([' ', '\0'])).collect())
    }

    pub fn as_f64(&self) -> Result<f64, Error> {
        let v = self.as_f64s()?;
        v.first().copied().ok_or_else(|| self.mismatch("empty value"))
    }

    pub fn as_f64s(&self) -> Result<Vec<f64>, Error> {
        match self.vr {
            Vr::FL => Ok(self.chunks::<4>()?.map(|c| f32::from_le_bytes(c) as f64).collect()),
            Vr::FD => Ok(self.chunks::<8>()?.map(f64::from_le_bytes).collect()),
            Vr::US | Vr::UL | Vr::SS | Vr::SL => {
                Ok(self.as_i64s()?.into_iter().map(|v| v as f64).collect())
            }
            _ => {
                let parts = self.as_strs().ok_or_else(|| self.mismatch("not text"))?;
                parts
                    .iter()
                    .map(|p| {
                        p.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| self.mismatch(&format!("{p:?} is not a decimal")))
                    })
                    .collect()
            }
        }
    }

    pub fn as_i64(&self) -> Result<i64, Error> {
        let v = self.as_i64s()?;
        v.first().copied().ok_or_else(|| self.mismatch("empty value"))
    }

    pub fn as_i64s(&self) -> Result<Vec<i64>, Error> {
        match self.vr {
            Vr::US => Ok(self.chunks::<2>()?.map(|c| u16::from_le_bytes(c) as i64).collect()),
            Vr::SS => Ok(self.chunks::<2>()?.map(|c| i16::from_le_bytes(c) as i64).collect()),
            Vr::UL => Ok(self.chunks::<4>()?.map(|c| u32::from_le_bytes(c) as i64).collect()),
            Vr::SL => Ok(self.chunks::<4>()?.map(|c| i32::from_le_bytes(c) as i64).collect()),
            _ => {
                let parts = self.as_strs().ok_or_else(|| self.mismatch("not text"))?;
                parts
                    .iter()
                    .map(|p| {
                        p.trim_start_matches('+')
                            .parse::<i64>()
                            .map_err(|_| self.mismatch(&format!("{p:?} is not an integer")))
                    })
                    .collect()
            }
        }
    }

    fn chunks<const N: usize>(&self) -> Result<impl Iterator<Item = [u8; N]> + '_, Error> {
        let b = self.bytes().ok_or_else(|| self.mismatch("sequence"))?;
        if b.len() % N != 0 {
            return Err(self.mismatch("length not a multiple of the value width"));
        }
        Ok(b.chunks_exact(N).map(|c| c.try_into().expect("chunk width")))
    }

    fn mismatch(&self, message: &str) -> Error {
        Error::TypeMismatch {
            tag: self.tag,
            message: format!("{} {}", self.vr, message),
        }
    }
}

/// Decimal string rendering that stays within the 16-byte DS limit for
/// ordinary values.
pub fn format_ds(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 16 {
        return s;
    }
    let mut s = format!("{v:.6e}");
    if s.len() > 16 {
        s = format!("{v:.3e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::tags;

    #[test]
    fn text_is_padded_and_trimmed() {
        let e = DataElement::text(tags::MODALITY, Vr::CS, "CT1");
        assert_eq!(e.bytes().unwrap(), b"CT1 ");
        assert_eq!(e.as_str(), Some("CT1"));
        let u = DataElement::text(tags::SOP_INSTANCE_UID, Vr::UI, "1.2.3");
        assert_eq!(u.bytes().unwrap(), b"1.2.3\0");
        assert_eq!(u.as_str(), Some("1.2.3"));
    }

    #[test]
    fn decimal_accessors() {
        let e = DataElement::text(tags::SLICE_THICKNESS, Vr::DS, "2.5");
        assert_eq!(e.as_f64().unwrap(), 2.5);
        let bad = DataElement::text(tags::SLICE_THICKNESS, Vr::DS, "abc");
        assert!(matches!(bad.as_f64(), Err(Error::TypeMismatch { .. })));
        let ipp = DataElement::text(tags::IMAGE_POSITION_PATIENT, Vr::DS, " 1\\-2.5\\3e1 ");
        assert_eq!(ipp.as_f64s().unwrap(), vec![1.0, -2.5, 30.0]);
    }

    #[test]
    fn binary_integers() {
        assert_eq!(DataElement::u16(tags::ROWS, 512).as_i64().unwrap(), 512);
        assert_eq!(DataElement::u32(tags::COMMAND_GROUP_LENGTH, 70000).as_i64().unwrap(), 70000);
        assert_eq!(DataElement::text(tags::INSTANCE_NUMBER, Vr::IS, "+7").as_i64().unwrap(), 7);
        assert!(DataElement::u16(tags::ROWS, 1).as_str().is_none());
    }

    #[test]
    fn float_values() {
        let e = DataElement::f32s(tags::GRAPHIC_DATA, &[1.5, 2.0]);
        assert_eq!(e.as_f64s().unwrap(), vec![1.5, 2.0]);
    }

    #[test]
    fn ds_formatting_stays_short() {
        assert_eq!(format_ds(2.5), "2.5");
        assert_eq!(format_ds(10.0), "10");
        assert!(format_ds(1.0 / 3.0).len() <= 16);
        assert!((format_ds(1.0 / 3.0).parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }
}
