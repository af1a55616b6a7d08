use super::mllp::AckCode;
use super::{Delimiters, Error, Field, Hl7Message, Segment};

/// Field placement for MSH and ORC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Layout {
    /// Positions as in the reference sample message: timestamp at MSH-6,
    /// message type at MSH-8, transaction time at ORC-6.
    #[default]
    FigureFaithful,
    /// Standard v2.5.1 positions: receiving application at MSH-5,
    /// timestamp at MSH-7, message type at MSH-9, transaction time at ORC-9.
    Strict,
}

impl Layout {
    pub fn message_type_field(self) -> usize {
        match self {
            Layout::FigureFaithful => 8,
            Layout::Strict => 9,
        }
    }

    pub fn control_id_field(self) -> usize {
        self.message_type_field() + 1
    }

    /// Guesses the layout of a received message from where the
    /// `TYPE^EVENT` message type sits.
    pub fn detect(msg: &Hl7Message) -> Option<Layout> {
        let msh = msg.segment("MSH")?;
        let is_type = |n: usize| {
            msh.field(n)
                .is_some_and(|f| f.component(1).is_some_and(|c| c.len() == 3) && f.component(2).is_some_and(|c| !c.is_empty()))
        };
        if is_type(9) {
            Some(Layout::Strict)
        } else if is_type(8) {
            Some(Layout::FigureFaithful)
        } else {
            None
        }
    }

    pub fn parse(s: &str) -> Option<Layout> {
        match s {
            "figure" | "figure-faithful" => Some(Layout::FigureFaithful),
            "strict" => Some(Layout::Strict),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatientIdent {
    pub id: String,
    pub assigning: String,
    pub family: String,
    pub given: String,
    pub birth_date: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderInfo {
    pub accession: String,
    pub study_code: String,
    pub study_description: String,
    pub image_id: String,
    pub short_description: String,
    pub study_date: String,
    pub transaction_datetime: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrmContext {
    pub sending_app: String,
    pub receiving_app: String,
    /// YYYYMMDDHHMMSS
    pub timestamp: String,
    pub control_id: String,
    pub processing_id: String,
    pub version: String,
    pub patient: PatientIdent,
    pub order: OrderInfo,
    /// (observation identifier, value), emitted as OBX 1..n.
    pub obx: Vec<(String, String)>,
}

fn fields(values: &[&str]) -> Vec<Field> {
    values.iter().map(|v| Field::text(v)).collect()
}

struct Header<'a> {
    sending: &'a str,
    receiving: &'a str,
    timestamp: &'a str,
    message_type: &'a [&'a str],
    control_id: &'a str,
    processing_id: &'a str,
    version: &'a str,
}

fn msh(d: &Delimiters, layout: Layout, h: &Header) -> Segment {
    let mut f = vec![Field::text(&d.field.to_string()), Field::text(&d.encoding_characters())];
    let blank = Field::empty;
    let (sending, receiving, ts) = (Field::text(h.sending), Field::text(h.receiving), Field::text(h.timestamp));
    match layout {
        Layout::FigureFaithful => f.extend([sending, receiving, blank(), ts, blank()]),
        Layout::Strict => f.extend([sending, blank(), receiving, blank(), ts, blank()]),
    }
    f.push(Field::components(h.message_type));
    f.extend(fields(&[h.control_id, h.processing_id, h.version]));
    Segment::new("MSH", f)
}

/// Builds the ORM^O01 priority message: MSH, PID, ORC, OBR and one
/// string-valued OBX per row.
pub fn build_orm_o01(ctx: &OrmContext, layout: Layout) -> Result<Hl7Message, Error> {
    if ctx.control_id.is_empty() {
        return Err(Error::InvariantViolation("control id is empty".into()));
    }
    if ctx.obx.is_empty() {
        return Err(Error::InvariantViolation("no OBX rows".into()));
    }
    let d = Delimiters::default();
    let p = &ctx.patient;
    let o = &ctx.order;
    let header = Header {
        sending: &ctx.sending_app,
        receiving: &ctx.receiving_app,
        timestamp: &ctx.timestamp,
        message_type: &["ORM", "O01"],
        control_id: &ctx.control_id,
        processing_id: &ctx.processing_id,
        version: &ctx.version,
    };
    let mut segments = vec![msh(&d, layout, &header)];

    let mut pid = vec![Field::empty(); 7];
    pid[2] = Field::components(&[p.id.as_str(), "", "", &p.assigning, &p.assigning]);
    pid[4] = Field::components(&[&p.family, &p.given]);
    pid[6] = Field::text(&p.birth_date);
    segments.push(Segment::new("PID", pid));

    let txn_at = match layout {
        Layout::FigureFaithful => 6,
        Layout::Strict => 9,
    };
    let mut orc = vec![Field::empty(); txn_at];
    orc[0] = Field::text("XO");
    orc[txn_at - 1] = Field::text(&o.transaction_datetime);
    segments.push(Segment::new("ORC", orc));

    let mut obr = vec![Field::empty(); 12];
    obr[0] = Field::text("1");
    obr[2] = Field::text(&o.accession);
    obr[3] = Field::components(&[o.study_code.as_str(), &o.study_description, &o.image_id, "", &o.short_description]);
    obr[6] = Field::text(&o.study_date);
    obr[11] = Field::text(&o.study_date);
    segments.push(Segment::new("OBR", obr));

    for (i, (id, value)) in ctx.obx.iter().enumerate() {
        segments.push(Segment::new("OBX", fields(&[&(i + 1).to_string(), "ST", id, "", value])));
    }
    Ok(Hl7Message { delimiters: d, segments })
}

/// Acknowledgement for `original`, mirroring its layout and control id.
pub fn build_ack(original: &Hl7Message, code: AckCode, timestamp: &str, control_id: &str) -> Hl7Message {
    let layout = Layout::detect(original).unwrap_or(Layout::Strict);
    let msh_in = original.segment("MSH");
    let get = |n: usize| msh_in.and_then(|s| s.field(n)).map(|f| f.display(&original.delimiters)).unwrap_or_default();
    let (sender, receiver) = match layout {
        Layout::FigureFaithful => (get(3), get(4)),
        Layout::Strict => (get(3), get(5)),
    };
    let original_control = get(layout.control_id_field());
    let (processing, version) = (get(layout.control_id_field() + 1), get(layout.control_id_field() + 2));
    let d = Delimiters::default();
    let header = msh(
        &d,
        layout,
        &Header {
            sending: &receiver,
            receiving: &sender,
            timestamp,
            message_type: &["ACK"],
            control_id,
            processing_id: &processing,
            version: &version,
        },
    );
    Hl7Message {
        delimiters: d,
        segments: vec![header, Segment::new("MSA", fields(&[code.as_str(), &original_control]))],
    }
}
