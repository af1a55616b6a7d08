mod common;

use common::datasets::canonical_dataset;
use flowgate::dicom::{parse_dataset, parse_part10, serialize_dataset, serialize_part10, DicomFile, EXPLICIT_VR_LE, IMPLICIT_VR_LE};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dataset_round_trips_in_both_syntaxes(ds in canonical_dataset()) {
        for ts in [EXPLICIT_VR_LE, IMPLICIT_VR_LE] {
            let bytes = serialize_dataset(&ds, ts).unwrap();
            prop_assert_eq!(bytes.len() % 2, 0);
            let back = parse_dataset(&bytes, ts).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(serialize_dataset(&back, ts).unwrap(), bytes);
        }
    }

    #[test]
    fn part10_round_trips(ds in canonical_dataset(), implicit in any::<bool>()) {
        let ts = if implicit { IMPLICIT_VR_LE } else { EXPLICIT_VR_LE };
        let file = DicomFile::new("1.2.840.10008.5.1.4.1.1.7", "1.2.3.4", ts, ds);
        let bytes = serialize_part10(&file).unwrap();
        let back = parse_part10(&bytes).unwrap();
        prop_assert_eq!(&back.dataset, &file.dataset);
        prop_assert_eq!(serialize_part10(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_input_never_panics(ds in canonical_dataset(), cut in 1usize..32) {
        for ts in [EXPLICIT_VR_LE, IMPLICIT_VR_LE] {
            let bytes = serialize_dataset(&ds, ts).unwrap();
            if cut < bytes.len() {
                let _ = parse_dataset(&bytes[..bytes.len() - cut], ts);
            }
        }
    }
}
