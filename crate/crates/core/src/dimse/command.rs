//! DIMSE command sets. Always encoded in implicit VR little endian with a
//! leading (0000,0000) group length.

use crate::dicom::{parse_dataset, serialize_dataset, tags, DataElement, DataSet, Vr, IMPLICIT_VR_LE};

use super::Error;

pub const C_STORE_RQ: u16 = 0x0001;
pub const C_STORE_RSP: u16 = 0x8001;
pub const C_ECHO_RQ: u16 = 0x0030;
pub const C_ECHO_RSP: u16 = 0x8030;

pub const DATA_SET_PRESENT: u16 = 0x0000;
pub const NO_DATA_SET: u16 = 0x0101;

/// DIMSE status codes used by this crate.
pub mod status {
    pub const SUCCESS: u16 = 0x0000;
    pub const REFUSED_NOT_AUTHORIZED: u16 = 0x0124;
    pub const OUT_OF_RESOURCES: u16 = 0xA700;
    pub const DATA_SET_DOES_NOT_MATCH_SOP_CLASS: u16 = 0xA900;
    pub const CANNOT_UNDERSTAND: u16 = 0xC000;

    pub fn is_success(s: u16) -> bool {
        s == SUCCESS
    }
}

/// One C-STORE request/response pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CStoreExchange {
    pub message_id: u16,
    pub affected_sop_class: String,
    pub affected_sop_instance: String,
    pub status: u16,
}

fn finish(mut body: DataSet) -> Result<Vec<u8>, Error> {
    body.remove(tags::COMMAND_GROUP_LENGTH);
    let rest = serialize_dataset(&body, IMPLICIT_VR_LE)?;
    body.put(DataElement::u32(tags::COMMAND_GROUP_LENGTH, rest.len() as u32));
    Ok(serialize_dataset(&body, IMPLICIT_VR_LE)?)
}

pub fn c_store_rq(message_id: u16, sop_class: &str, sop_instance: &str) -> Result<Vec<u8>, Error> {
    let mut c = DataSet::new();
    c.set_text(tags::AFFECTED_SOP_CLASS_UID, Vr::UI, sop_class);
    c.put(DataElement::u16(tags::COMMAND_FIELD, C_STORE_RQ));
    c.put(DataElement::u16(tags::MESSAGE_ID, message_id));
    c.put(DataElement::u16(tags::PRIORITY, 0x0000));
    c.put(DataElement::u16(tags::COMMAND_DATA_SET_TYPE, DATA_SET_PRESENT));
    c.set_text(tags::AFFECTED_SOP_INSTANCE_UID, Vr::UI, sop_instance);
    finish(c)
}

pub fn c_store_rsp(rq: &Command, status: u16) -> Result<Vec<u8>, Error> {
    let mut c = DataSet::new();
    c.set_text(tags::AFFECTED_SOP_CLASS_UID, Vr::UI, &rq.affected_sop_class);
    c.put(DataElement::u16(tags::COMMAND_FIELD, C_STORE_RSP));
    c.put(DataElement::u16(tags::MESSAGE_ID_BEING_RESPONDED_TO, rq.message_id));
    c.put(DataElement::u16(tags::COMMAND_DATA_SET_TYPE, NO_DATA_SET));
    c.put(DataElement::u16(tags::STATUS, status));
    c.set_text(tags::AFFECTED_SOP_INSTANCE_UID, Vr::UI, &rq.affected_sop_instance);
    finish(c)
}

pub fn c_echo_rq(message_id: u16) -> Result<Vec<u8>, Error> {
    let mut c = DataSet::new();
    c.set_text(tags::AFFECTED_SOP_CLASS_UID, Vr::UI, crate::dicom::sop::VERIFICATION);
    c.put(DataElement::u16(tags::COMMAND_FIELD, C_ECHO_RQ));
    c.put(DataElement::u16(tags::MESSAGE_ID, message_id));
    c.put(DataElement::u16(tags::COMMAND_DATA_SET_TYPE, NO_DATA_SET));
    finish(c)
}

pub fn c_echo_rsp(rq: &Command) -> Result<Vec<u8>, Error> {
    let mut c = DataSet::new();
    c.set_text(tags::AFFECTED_SOP_CLASS_UID, Vr::UI, crate::dicom::sop::VERIFICATION);
    c.put(DataElement::u16(tags::COMMAND_FIELD, C_ECHO_RSP));
    c.put(DataElement::u16(tags::MESSAGE_ID_BEING_RESPONDED_TO, rq.message_id));
    c.put(DataElement::u16(tags::COMMAND_DATA_SET_TYPE, NO_DATA_SET));
    c.put(DataElement::u16(tags::STATUS, status::SUCCESS));
    finish(c)
}

/// The fields of a decoded command set that this crate acts on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Command {
    pub command_field: u16,
    /// MessageID for requests, MessageIDBeingRespondedTo for responses.
    pub message_id: u16,
    pub affected_sop_class: String,
    pub affected_sop_instance: String,
    pub has_data_set: bool,
    pub status: Option<u16>,
}

impl Command {
    pub fn parse(bytes: &[u8]) -> Result<Self, Error> {
        let ds = parse_dataset(bytes, IMPLICIT_VR_LE)?;
        let u16_of = |tag| -> Result<Option<u16>, Error> {
            Ok(ds.get_int(tag)?.map(|v| v as u16))
        };
        let command_field = u16_of(tags::COMMAND_FIELD)?
            .ok_or_else(|| Error::Protocol("command without CommandField".into()))?;
        let is_response = command_field & 0x8000 != 0;
        let id_tag = if is_response {
            tags::MESSAGE_ID_BEING_RESPONDED_TO
        } else {
            tags::MESSAGE_ID
        };
        Ok(Command {
            command_field,
            message_id: u16_of(id_tag)?.unwrap_or(0),
            affected_sop_class: ds.get_string(tags::AFFECTED_SOP_CLASS_UID).unwrap_or_default(),
            affected_sop_instance: ds.get_string(tags::AFFECTED_SOP_INSTANCE_UID).unwrap_or_default(),
            has_data_set: u16_of(tags::COMMAND_DATA_SET_TYPE)?.unwrap_or(NO_DATA_SET) != NO_DATA_SET,
            status: u16_of(tags::STATUS)?,
        })
    }
}
