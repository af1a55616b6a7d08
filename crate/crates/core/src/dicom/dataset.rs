use std::collections::btree_map::{self, BTreeMap};

use super::{DataElement, Error, Tag, Vr};

/// An ordered collection of data elements, unique by tag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataSet {
    elements: BTreeMap<Tag, DataElement>,
}

impl DataSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Inserts or replaces an element, returning the displaced one.
    pub fn put(&mut self, element: DataElement) -> Option<DataElement> {
        self.elements.insert(element.tag, element)
    }

    pub fn get(&self, tag: Tag) -> Option<&DataElement> {
        self.elements.get(&tag)
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.elements.contains_key(&tag)
    }

    /// Removes a tag; removing an absent tag is a no-op.
    pub fn remove(&mut self, tag: Tag) -> Option<DataElement> {
        self.elements.remove(&tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataElement> {
        self.elements.values()
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.elements.keys().copied()
    }

    /// Sets a text element, replacing any previous value.
    pub fn set_text(&mut self, tag: Tag, vr: Vr, value: &str) {
        self.put(DataElement::text(tag, vr, value));
    }

    /// Trimmed text value of `tag`, if present and textual.
    pub fn get_str(&self, tag: Tag) -> Option<&str> {
        self.get(tag).and_then(|e| e.as_str())
    }

    pub fn get_string(&self, tag: Tag) -> Option<String> {
        self.get_str(tag).map(str::to_string)
    }

    /// Decimal value of `tag`; `Ok(None)` when absent.
    pub fn get_decimal(&self, tag: Tag) -> Result<Option<f64>, Error> {
        self.get(tag).map(|e| e.as_f64()).transpose()
    }

    pub fn get_decimals(&self, tag: Tag) -> Result<Option<Vec<f64>>, Error> {
        self.get(tag).map(|e| e.as_f64s()).transpose()
    }

    pub fn get_int(&self, tag: Tag) -> Result<Option<i64>, Error> {
        self.get(tag).map(|e| e.as_i64()).transpose()
    }

    pub fn get_items(&self, tag: Tag) -> Option<&[DataSet]> {
        self.get(tag).and_then(|e| e.items())
    }
}

impl FromIterator<DataElement> for DataSet {
    fn from_iter<I: IntoIterator<Item = DataElement>>(iter: I) -> Self {
        let mut ds = DataSet::new();
        for e in iter {
            ds.put(e);
        }
        ds
    }
}

impl IntoIterator for DataSet {
    type Item = DataElement;
    type IntoIter = btree_map::IntoValues<Tag, DataElement>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.into_values()
    }
}

impl<'a> IntoIterator for &'a DataSet {
    type Item = &'a DataElement;
    type IntoIter = btree_map::Values<'a, Tag, DataElement>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicom::tags;

    #[test]
    fn set_get_replace_delete() {
        let mut ds = DataSet::new();
        ds.set_text(tags::INSTITUTION_NAME, Vr::LO, "CAII");
        assert_eq!(ds.get_str(tags::INSTITUTION_NAME), Some("CAII"));

        ds.set_text(tags::MODALITY, Vr::CS, "CT");
        ds.set_text(tags::MODALITY, Vr::CS, "MR");
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get_str(tags::MODALITY), Some("MR"));

        let before = ds.clone();
        ds.set_text(tags::ACCESSION_NUMBER, Vr::SH, "A1");
        ds.remove(tags::ACCESSION_NUMBER);
        assert_eq!(ds, before);
        ds.remove(Tag::new(0x0009, 0x0010));
        assert_eq!(ds, before);
    }

    #[test]
    fn iteration_is_ascending() {
        let ds: DataSet = [
            DataElement::text(tags::PATIENT_ID, Vr::LO, "1"),
            DataElement::text(tags::MODALITY, Vr::CS, "CT"),
            DataElement::text(tags::SOP_CLASS_UID, Vr::UI, "1.2"),
        ]
        .into_iter()
        .collect();
        let tags: Vec<Tag> = ds.tags().collect();
        assert!(tags.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn typed_getters() {
        let mut ds = DataSet::new();
        ds.set_text(tags::SLICE_THICKNESS, Vr::DS, "2.5");
        assert_eq!(ds.get_decimal(tags::SLICE_THICKNESS).unwrap(), Some(2.5));
        assert_eq!(ds.get_decimal(tags::PIXEL_SPACING).unwrap(), None);
        ds.set_text(tags::SLICE_THICKNESS, Vr::DS, "abc");
        assert!(ds.get_decimal(tags::SLICE_THICKNESS).is_err());
    }
}
