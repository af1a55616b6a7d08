//! Upper layer PDU codec (A-ASSOCIATE-RQ/AC/RJ, P-DATA-TF, A-RELEASE-RQ/RP, A-ABORT).

use std::io::Read;

use super::{AeTitle, Error};

pub const APPLICATION_CONTEXT: &str = "1.2.840.10008.3.1.1.1";
pub const PROTOCOL_VERSION: u16 = 0x0001;

const HEADER_LEN: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub enum Pdu {
    AssociateRq(AssociateRq),
    AssociateAc(AssociateAc),
    AssociateRj(AssociateRj),
    DataTf(Vec<Pdv>),
    ReleaseRq,
    ReleaseRp,
    Abort(Abort),
}

impl Pdu {
    pub fn type_code(&self) -> u8 {
        match self {
            Pdu::AssociateRq(_) => 0x01,
            Pdu::AssociateAc(_) => 0x02,
            Pdu::AssociateRj(_) => 0x03,
            Pdu::DataTf(_) => 0x04,
            Pdu::ReleaseRq => 0x05,
            Pdu::ReleaseRp => 0x06,
            Pdu::Abort(_) => 0x07,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserInfo {
    /// Largest P-DATA-TF variable field this side accepts; 0 means unlimited.
    pub max_pdu_length: u32,
    pub implementation_class_uid: Option<String>,
    pub implementation_version_name: Option<String>,
}

impl Default for UserInfo {
    fn default() -> Self {
        UserInfo {
            max_pdu_length: super::DEFAULT_MAX_PDU,
            implementation_class_uid: Some(crate::dicom::IMPLEMENTATION_CLASS_UID.to_string()),
            implementation_version_name: Some("FLOWGATE_01".to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresentationContextRq {
    /// Odd, 1..=255.
    pub id: u8,
    pub abstract_syntax: String,
    pub transfer_syntaxes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextResult {
    Acceptance = 0,
    UserRejection = 1,
    NoReason = 2,
    AbstractSyntaxNotSupported = 3,
    TransferSyntaxesNotSupported = 4,
}

impl ContextResult {
    fn from_u8(v: u8) -> Result<Self, Error> {
        Ok(match v {
            0 => ContextResult::Acceptance,
            1 => ContextResult::UserRejection,
            2 => ContextResult::NoReason,
            3 => ContextResult::AbstractSyntaxNotSupported,
            4 => ContextResult::TransferSyntaxesNotSupported,
            _ => return Err(Error::Malformed(format!("presentation context result {v}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresentationContextAc {
    pub id: u8,
    pub result: ContextResult,
    /// Meaningful only when accepted.
    pub transfer_syntax: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociateRq {
    pub protocol_version: u16,
    pub called: AeTitle,
    pub calling: AeTitle,
    pub application_context: String,
    pub contexts: Vec<PresentationContextRq>,
    pub user_info: UserInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociateAc {
    pub protocol_version: u16,
    pub called: AeTitle,
    pub calling: AeTitle,
    pub application_context: String,
    pub contexts: Vec<PresentationContextAc>,
    pub user_info: UserInfo,
}

/// Rejection: result 1 = permanent, 2 = transient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssociateRj {
    pub result: u8,
    pub source: u8,
    pub reason: u8,
}

impl AssociateRj {
    pub const CALLING_AE_NOT_RECOGNIZED: AssociateRj = AssociateRj {
        result: 1,
        source: 1,
        reason: 3,
    };
    pub const CALLED_AE_NOT_RECOGNIZED: AssociateRj = AssociateRj {
        result: 1,
        source: 1,
        reason: 7,
    };
    pub const APPLICATION_CONTEXT_NOT_SUPPORTED: AssociateRj = AssociateRj {
        result: 1,
        source: 1,
        reason: 2,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Abort {
    pub source: u8,
    pub reason: u8,
}

/// Presentation data value: one fragment of a command or dataset stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Pdv {
    pub context_id: u8,
    pub is_command: bool,
    pub is_last: bool,
    pub data: Vec<u8>,
}

fn put_item(out: &mut Vec<u8>, item_type: u8, body: &[u8]) -> Result<(), Error> {
    let len = u16::try_from(body.len()).map_err(|_| Error::OversizedPdu(body.len() as u64))?;
    out.push(item_type);
    out.push(0);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(body);
    Ok(())
}

fn encode_user_info(out: &mut Vec<u8>, u: &UserInfo) -> Result<(), Error> {
    let mut body = Vec::new();
    put_item(&mut body, 0x51, &u.max_pdu_length.to_be_bytes())?;
    if let Some(uid) = &u.implementation_class_uid {
        put_item(&mut body, 0x52, uid.as_bytes())?;
    }
    if let Some(name) = &u.implementation_version_name {
        put_item(&mut body, 0x55, name.as_bytes())?;
    }
    put_item(out, 0x50, &body)
}

fn encode_assoc_head(
    out: &mut Vec<u8>,
    version: u16,
    called: &AeTitle,
    calling: &AeTitle,
    app_ctx: &str,
) -> Result<(), Error> {
    out.extend_from_slice(&version.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&called.to_bytes());
    out.extend_from_slice(&calling.to_bytes());
    out.extend_from_slice(&[0; 32]);
    put_item(out, 0x10, app_ctx.as_bytes())
}

pub fn encode_pdu(pdu: &Pdu) -> Result<Vec<u8>, Error> {
    let mut body = Vec::new();
    match pdu {
        Pdu::AssociateRq(rq) => {
            encode_assoc_head(&mut body, rq.protocol_version, &rq.called, &rq.calling, &rq.application_context)?;
            for pc in &rq.contexts {
                let mut item = vec![pc.id, 0, 0, 0];
                put_item(&mut item, 0x30, pc.abstract_syntax.as_bytes())?;
                for ts in &pc.transfer_syntaxes {
                    put_item(&mut item, 0x40, ts.as_bytes())?;
                }
                put_item(&mut body, 0x20, &item)?;
            }
            encode_user_info(&mut body, &rq.user_info)?;
        }
        Pdu::AssociateAc(ac) => {
            encode_assoc_head(&mut body, ac.protocol_version, &ac.called, &ac.calling, &ac.application_context)?;
            for pc in &ac.contexts {
                let mut item = vec![pc.id, 0, pc.result as u8, 0];
                put_item(&mut item, 0x40, pc.transfer_syntax.as_bytes())?;
                put_item(&mut body, 0x21, &item)?;
            }
            encode_user_info(&mut body, &ac.user_info)?;
        }
        Pdu::AssociateRj(rj) => body.extend_from_slice(&[0, rj.result, rj.source, rj.reason]),
        Pdu::DataTf(pdvs) => {
            for pdv in pdvs {
                let len = u32::try_from(pdv.data.len() + 2)
                    .map_err(|_| Error::OversizedPdu(pdv.data.len() as u64))?;
                body.extend_from_slice(&len.to_be_bytes());
                body.push(pdv.context_id);
                body.push(u8::from(pdv.is_command) | (u8::from(pdv.is_last) << 1));
                body.extend_from_slice(&pdv.data);
            }
        }
        Pdu::ReleaseRq | Pdu::ReleaseRp => body.extend_from_slice(&[0; 4]),
        Pdu::Abort(a) => body.extend_from_slice(&[0, 0, a.source, a.reason]),
    }
    let len = u32::try_from(body.len()).map_err(|_| Error::OversizedPdu(body.len() as u64))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(pdu.type_code());
    out.push(0);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Malformed(format!(
                "item overruns PDU at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Error> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    /// (type, body) of the next item.
    fn item(&mut self) -> Result<(u8, &'a [u8]), Error> {
        let t = self.u8()?;
        self.u8()?;
        let len = self.u16()? as usize;
        Ok((t, self.take(len)?))
    }
}

fn uid_str(b: &[u8]) -> Result<String, Error> {
    std::str::from_utf8(b)
        .map(|s| s.trim_end_matches(['\0', ' ']).to_string())
        .map_err(|_| Error::Malformed("non-ASCII UID".into()))
}

fn decode_user_info(body: &[u8]) -> Result<UserInfo, Error> {
    let mut c = Cursor { buf: body, pos: 0 };
    let mut u = UserInfo {
        max_pdu_length: 0,
        implementation_class_uid: None,
        implementation_version_name: None,
    };
    while !c.done() {
        let (t, b) = c.item()?;
        match t {
            0x51 if b.len() == 4 => u.max_pdu_length = u32::from_be_bytes([b[0], b[1], b[2], b[3]]),
            0x52 => u.implementation_class_uid = Some(uid_str(b)?),
            0x55 => u.implementation_version_name = Some(uid_str(b)?),
            _ => {}
        }
    }
    Ok(u)
}

type AssocHead = (u16, AeTitle, AeTitle);

fn decode_assoc_head(c: &mut Cursor<'_>) -> Result<AssocHead, Error> {
    let version = c.u16()?;
    c.take(2)?;
    let called = AeTitle::from_bytes(c.take(16)?)?;
    let calling = AeTitle::from_bytes(c.take(16)?)?;
    c.take(32)?;
    Ok((version, called, calling))
}

/// Decodes one complete PDU (header included).
pub fn decode_pdu(bytes: &[u8]) -> Result<Pdu, Error> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::LengthMismatch {
            declared: None,
            actual: bytes.len(),
        });
    }
    let pdu_type = bytes[0];
    if !(0x01..=0x07).contains(&pdu_type) {
        return Err(Error::UnknownPduType(pdu_type));
    }
    let declared = u32::from_be_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != declared {
        return Err(Error::LengthMismatch {
            declared: Some(declared),
            actual: body.len(),
        });
    }
    decode_body(pdu_type, body)
}

fn decode_body(pdu_type: u8, body: &[u8]) -> Result<Pdu, Error> {
    let mut c = Cursor { buf: body, pos: 0 };
    match pdu_type {
        0x01 | 0x02 => {
            let (version, called, calling) = decode_assoc_head(&mut c)?;
            let mut app_ctx = None;
            let mut rq_contexts = Vec::new();
            let mut ac_contexts = Vec::new();
            let mut user_info = None;
            while !c.done() {
                let (t, b) = c.item()?;
                match t {
                    0x10 => app_ctx = Some(uid_str(b)?),
                    0x20 if pdu_type == 0x01 => {
                        let mut ic = Cursor { buf: b, pos: 0 };
                        let id = ic.u8()?;
                        ic.take(3)?;
                        let mut abstract_syntax = None;
                        let mut transfer_syntaxes = Vec::new();
                        while !ic.done() {
                            let (st, sb) = ic.item()?;
                            match st {
                                0x30 => abstract_syntax = Some(uid_str(sb)?),
                                0x40 => transfer_syntaxes.push(uid_str(sb)?),
                                _ => {}
                            }
                        }
                        rq_contexts.push(PresentationContextRq {
                            id,
                            abstract_syntax: abstract_syntax
                                .ok_or_else(|| Error::Malformed("context without abstract syntax".into()))?,
                            transfer_syntaxes,
                        });
                    }
                    0x21 if pdu_type == 0x02 => {
                        let mut ic = Cursor { buf: b, pos: 0 };
                        let id = ic.u8()?;
                        ic.u8()?;
                        let result = ContextResult::from_u8(ic.u8()?)?;
                        ic.u8()?;
                        let mut transfer_syntax = String::new();
                        while !ic.done() {
                            let (st, sb) = ic.item()?;
                            if st == 0x40 {
                                transfer_syntax = uid_str(sb)?;
                            }
                        }
                        ac_contexts.push(PresentationContextAc {
                            id,
                            result,
                            transfer_syntax,
                        });
                    }
                    0x50 => user_info = Some(decode_user_info(b)?),
                    _ => {}
                }
            }
            let application_context =
                app_ctx.ok_or_else(|| Error::Malformed("missing application context".into()))?;
            let user_info = user_info.ok_or_else(|| Error::Malformed("missing user information".into()))?;
            Ok(if pdu_type == 0x01 {
                Pdu::AssociateRq(AssociateRq {
                    protocol_version: version,
                    called,
                    calling,
                    application_context,
                    contexts: rq_contexts,
                    user_info,
                })
            } else {
                Pdu::AssociateAc(AssociateAc {
                    protocol_version: version,
                    called,
                    calling,
                    application_context,
                    contexts: ac_contexts,
                    user_info,
                })
            })
        }
        0x03 => {
            let b = c.take(4)?;
            Ok(Pdu::AssociateRj(AssociateRj {
                result: b[1],
                source: b[2],
                reason: b[3],
            }))
        }
        0x04 => {
            let mut pdvs = Vec::new();
            while !c.done() {
                let len = c.u32()? as usize;
                if len < 2 {
                    return Err(Error::Malformed("PDV shorter than its header".into()));
                }
                let context_id = c.u8()?;
                let header = c.u8()?;
                pdvs.push(Pdv {
                    context_id,
                    is_command: header & 0x01 != 0,
                    is_last: header & 0x02 != 0,
                    data: c.take(len - 2)?.to_vec(),
                });
            }
            Ok(Pdu::DataTf(pdvs))
        }
        0x05 | 0x06 => {
            c.take(4)?;
            Ok(if pdu_type == 0x05 { Pdu::ReleaseRq } else { Pdu::ReleaseRp })
        }
        0x07 => {
            let b = c.take(4)?;
            Ok(Pdu::Abort(Abort {
                source: b[2],
                reason: b[3],
            }))
        }
        other => Err(Error::UnknownPduType(other)),
    }
}

/// Reads one PDU from a stream, refusing bodies larger than `max_body`.
pub fn read_pdu<R: Read>(r: &mut R, max_body: usize) -> Result<Pdu, Error> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if !(0x01..=0x07).contains(&header[0]) {
        return Err(Error::UnknownPduType(header[0]));
    }
    let len = u32::from_be_bytes([header[2], header[3], header[4], header[5]]) as usize;
    if len > max_body {
        return Err(Error::OversizedPdu(len as u64));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    decode_body(header[0], &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ae(s: &str) -> AeTitle {
        AeTitle::new(s).unwrap()
    }

    pub(crate) fn sample_rq() -> AssociateRq {
        AssociateRq {
            protocol_version: PROTOCOL_VERSION,
            called: ae("FLOWGATE"),
            calling: ae("MODALITY1"),
            application_context: APPLICATION_CONTEXT.into(),
            contexts: vec![
                PresentationContextRq {
                    id: 1,
                    abstract_syntax: "1.2.840.10008.5.1.4.1.1.2".into(),
                    transfer_syntaxes: vec!["1.2.840.10008.1.2.1".into(), "1.2.840.10008.1.2".into()],
                },
                PresentationContextRq {
                    id: 3,
                    abstract_syntax: "1.2.840.10008.1.1".into(),
                    transfer_syntaxes: vec!["1.2.840.10008.1.2".into()],
                },
            ],
            user_info: UserInfo::default(),
        }
    }

    #[test]
    fn every_variant_round_trips() {
        let rq = sample_rq();
        let ac = AssociateAc {
            protocol_version: PROTOCOL_VERSION,
            called: rq.called.clone(),
            calling: rq.calling.clone(),
            application_context: APPLICATION_CONTEXT.into(),
            contexts: vec![
                PresentationContextAc {
                    id: 1,
                    result: ContextResult::Acceptance,
                    transfer_syntax: "1.2.840.10008.1.2.1".into(),
                },
                PresentationContextAc {
                    id: 3,
                    result: ContextResult::AbstractSyntaxNotSupported,
                    transfer_syntax: String::new(),
                },
            ],
            user_info: UserInfo {
                max_pdu_length: 0,
                implementation_class_uid: None,
                implementation_version_name: None,
            },
        };
        let all = vec![
            Pdu::AssociateRq(rq),
            Pdu::AssociateAc(ac),
            Pdu::AssociateRj(AssociateRj::CALLED_AE_NOT_RECOGNIZED),
            Pdu::DataTf(vec![
                Pdv {
                    context_id: 1,
                    is_command: true,
                    is_last: true,
                    data: vec![1, 2, 3, 4],
                },
                Pdv {
                    context_id: 1,
                    is_command: false,
                    is_last: false,
                    data: vec![],
                },
            ]),
            Pdu::ReleaseRq,
            Pdu::ReleaseRp,
            Pdu::Abort(Abort { source: 2, reason: 1 }),
        ];
        for p in all {
            let bytes = encode_pdu(&p).unwrap();
            assert_eq!(bytes[0], p.type_code());
            let declared = u32::from_be_bytes(bytes[2..6].try_into().unwrap()) as usize;
            assert_eq!(declared, bytes.len() - 6);
            assert_eq!(decode_pdu(&bytes).unwrap(), p);
            assert_eq!(read_pdu(&mut bytes.as_slice(), usize::MAX).unwrap(), p);
        }
    }

    #[test]
    fn fixed_layouts() {
        let rq = encode_pdu(&Pdu::AssociateRq(sample_rq())).unwrap();
        assert_eq!(rq[0], 0x01);
        assert_eq!(&rq[6..8], &[0x00, 0x01]);
        assert_eq!(&rq[10..26], b"FLOWGATE        ");
        assert_eq!(&rq[26..42], b"MODALITY1       ");
        assert_eq!(rq[74], 0x10);
        assert_eq!(encode_pdu(&Pdu::ReleaseRq).unwrap(), vec![0x05, 0, 0, 0, 0, 4, 0, 0, 0, 0]);
        assert_eq!(encode_pdu(&Pdu::ReleaseRq).unwrap().len(), 10);
        assert_eq!(
            encode_pdu(&Pdu::AssociateRj(AssociateRj::CALLED_AE_NOT_RECOGNIZED)).unwrap(),
            vec![0x03, 0, 0, 0, 0, 4, 0, 1, 1, 7]
        );
    }

    #[test]
    fn pdv_header_bits() {
        let p = Pdu::DataTf(vec![Pdv {
            context_id: 5,
            is_command: false,
            is_last: true,
            data: vec![9; 4],
        }]);
        let b = encode_pdu(&p).unwrap();
        assert_eq!(&b[6..10], &6u32.to_be_bytes());
        assert_eq!(b[10], 5);
        assert_eq!(b[11], 0b10);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(
            decode_pdu(&[0x09, 0, 0, 0, 0, 0]),
            Err(Error::UnknownPduType(0x09))
        ));
        assert!(matches!(decode_pdu(&[0x05, 0, 0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(
            decode_pdu(&[0x05, 0, 0, 0, 0, 4, 0, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
