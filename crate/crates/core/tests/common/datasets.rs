//! Random datasets in canonical form: every element is even-length, text is
//! padded the way the codec pads it, and each tag carries its dictionary VR
//! (private tags are `UN`) so implicit VR parsing recovers the same VR.

use flowgate::dicom::{known_tags, DataElement, DataSet, Tag, Vr};
use proptest::prelude::*;

const PRIVATE: [Tag; 3] = [Tag::new(0x0009, 0x0010), Tag::new(0x0009, 0x1001), Tag::new(0x0029, 0x1010)];

fn text_chars(vr: Vr) -> &'static str {
    match vr {
        Vr::UI => "[0-9]{1,8}(\\.[0-9]{1,8}){0,4}",
        Vr::DS => "-?[0-9]{1,4}(\\.[0-9]{1,3})?(\\\\[0-9]{1,3})?",
        Vr::IS => "-?[0-9]{1,6}",
        Vr::DA => "(19|20)[0-9]{2}[01][0-9][0-3][0-9]",
        Vr::TM => "[0-2][0-9][0-5][0-9]([0-5][0-9])?",
        Vr::CS | Vr::AE => "[A-Z0-9_ ]{0,16}",
        Vr::PN => "[A-Z]{1,8}(\\^[A-Z]{1,8}){0,2}",
        _ => "[ -\\[\\]-~]{0,40}",
    }
}

fn binary_width(vr: Vr) -> usize {
    match vr {
        Vr::US | Vr::SS | Vr::OW => 2,
        Vr::UL | Vr::SL | Vr::FL => 4,
        Vr::FD => 8,
        _ => 1,
    }
}

fn element(tag: Tag, vr: Vr, depth: u32) -> BoxedStrategy<DataElement> {
    if vr == Vr::SQ {
        return prop::collection::vec(dataset_at(depth - 1), 0..3)
            .prop_map(move |items| DataElement::sequence(tag, items))
            .boxed();
    }
    if vr.is_text() {
        return proptest::string::string_regex(text_chars(vr))
            .unwrap()
            .prop_map(move |s| DataElement::text(tag, vr, &s))
            .boxed();
    }
    let w = binary_width(vr);
    prop::collection::vec(any::<u8>(), 0..64)
        .prop_map(move |mut b| {
            let unit = w.max(2);
            b.truncate(b.len() / unit * unit);
            DataElement::new(tag, vr, b)
        })
        .boxed()
}

fn dataset_at(depth: u32) -> BoxedStrategy<DataSet> {
    let pool: Vec<(Tag, Vr)> = known_tags()
        .filter(|(t, v)| !t.is_command() && !t.is_file_meta() && t.group != 0xFFFE && (depth > 0 || *v != Vr::SQ))
        .chain(PRIVATE.iter().map(|t| (*t, Vr::UN)))
        .collect();
    prop::collection::vec(
        prop::sample::select(pool).prop_flat_map(move |(t, v)| element(t, v, depth)),
        0..14,
    )
    .prop_map(|elements| {
        let mut ds = DataSet::new();
        for e in elements {
            ds.put(e);
        }
        ds
    })
    .boxed()
}

pub fn canonical_dataset() -> BoxedStrategy<DataSet> {
    dataset_at(2)
}
