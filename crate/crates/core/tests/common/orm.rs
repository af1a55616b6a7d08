use flowgate::hl7::{OrderInfo, OrmContext, PatientIdent};

/// The context of the sample priority message.
pub fn figure_context() -> OrmContext {
    OrmContext {
        sending_app: "MONAI_TEST".into(),
        receiving_app: "HIS_TEST".into(),
        timestamp: "20240101120000".into(),
        control_id: "GUID-1".into(),
        processing_id: "T".into(),
        version: "2.5.1".into(),
        patient: PatientIdent {
            id: "12345".into(),
            assigning: "MC".into(),
            family: "DOE".into(),
            given: "JANE".into(),
            birth_date: "19700101".into(),
        },
        order: OrderInfo {
            accession: "ACC001".into(),
            study_code: "XR1".into(),
            study_description: "XRAY CHEST".into(),
            image_id: "IMAGEID".into(),
            short_description: "CHEST".into(),
            study_date: "20240101".into(),
            transaction_datetime: "20240101120005".into(),
        },
        obx: vec![
            ("AI_PRIORITY_MONAI".into(), "HIGH".into()),
            ("AI_DETECTION_MONAI".into(), "POS".into()),
        ],
    }
}
