#![allow(dead_code)]

pub mod datasets;
pub mod orm;

use flowgate::dicom::{sop, tags, DataElement, DataSet, Tag, Vr};
use flowgate::dimse::AeTitle;
use flowgate::rules::{
    CmpOp, DestinationDef, Literal, MatchExpr, MorphOp, Pattern, Predicate, Priority, Route, RouteMode, Rule,
    RuleSet, Selector, SourceDef, SourceKind,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const INSTITUTION: Tag = tags::INSTITUTION_NAME;

const MODALITIES: [&str; 3] = ["CT", "MR", "US"];
const DESCRIPTIONS: [&str; 4] = ["CHEST", "HEAD CT", "ABDOMEN", "chest low dose"];
const THICKNESS: [f64; 5] = [0.625, 1.0, 2.0, 3.0, 5.0];
const ACCESSIONS: [&str; 3] = ["ACC1", "ACC2", "X99"];
const PATTERNS: [&str; 5] = ["^C", "T$", "(?i)chest", "A.*2", "^$"];
const SOURCES: [&str; 3] = ["modality1", "modality2", "ai"];

fn ae(s: &str) -> AeTitle {
    s.parse().unwrap()
}

pub fn sources() -> Vec<SourceDef> {
    SOURCES
        .iter()
        .enumerate()
        .map(|(i, n)| SourceDef {
            name: n.to_string(),
            calling_ae: ae(&format!("SRC{i}")),
            peer: None,
            kind: if *n == "ai" { SourceKind::Ai } else { SourceKind::Modality },
        })
        .collect()
}

fn text_value(sel: Selector, rng: &mut impl Rng) -> String {
    match sel {
        Selector::Modality => MODALITIES.choose(rng).unwrap().to_string(),
        Selector::StudyDescription | Selector::SeriesDescription => DESCRIPTIONS.choose(rng).unwrap().to_string(),
        Selector::SopClass => [sop::CT_IMAGE, sop::MR_IMAGE].choose(rng).unwrap().to_string(),
        Selector::Accession => ACCESSIONS.choose(rng).unwrap().to_string(),
        Selector::Source => SOURCES.choose(rng).unwrap().to_string(),
        _ => ["A", "B", "CAII"].choose(rng).unwrap().to_string(),
    }
}

fn number(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.7) {
        *THICKNESS.choose(rng).unwrap()
    } else {
        (rng.gen_range(-100..1000) as f64) / 8.0
    }
}

fn predicate(rng: &mut impl Rng) -> Predicate {
    let selectors = [
        Selector::Modality,
        Selector::StudyDescription,
        Selector::SeriesDescription,
        Selector::SliceThickness,
        Selector::SopClass,
        Selector::Accession,
        Selector::Source,
        Selector::Tag(INSTITUTION),
        Selector::Tag(tags::SLICE_THICKNESS),
        Selector::Tag(tags::ROWS),
    ];
    let selector = *selectors.choose(rng).unwrap();
    let numeric = selector.is_numeric() || (selector.is_untyped() && selector != Selector::Tag(INSTITUTION) && rng.gen_bool(0.8));
    if numeric {
        let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(rng).unwrap();
        let n = if selector == Selector::Tag(tags::ROWS) { *[8.0, 10.0, 512.0].choose(rng).unwrap() } else { number(rng) };
        return Predicate {
            selector,
            op,
            literal: Literal::Num(n),
        };
    }
    match rng.gen_range(0..3) {
        0 => Predicate {
            selector,
            op: CmpOp::Match,
            literal: Literal::Pattern(Pattern::new(PATTERNS.choose(rng).unwrap()).unwrap()),
        },
        1 => Predicate {
            selector,
            op: CmpOp::Ne,
            literal: Literal::Str(text_value(selector, rng)),
        },
        _ => Predicate {
            selector,
            op: CmpOp::Eq,
            literal: Literal::Str(text_value(selector, rng)),
        },
    }
}

pub fn expr(rng: &mut impl Rng, depth: u32) -> MatchExpr {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return if rng.gen_bool(0.08) {
            MatchExpr::Const(rng.gen_bool(0.5))
        } else {
            MatchExpr::Pred(predicate(rng))
        };
    }
    match rng.gen_range(0..3) {
        0 => MatchExpr::Not(Box::new(expr(rng, depth - 1))),
        1 => MatchExpr::And((0..rng.gen_range(2..4)).map(|_| expr(rng, depth - 1)).collect()),
        _ => MatchExpr::Or((0..rng.gen_range(2..4)).map(|_| expr(rng, depth - 1)).collect()),
    }
}

fn morph(rng: &mut impl Rng) -> MorphOp {
    match rng.gen_range(0..3) {
        0 => MorphOp::Set {
            tag: INSTITUTION,
            vr: Vr::LO,
            value: ["CAII", "a \"quoted\" name", r"back\slash", "# not a comment"].choose(rng).unwrap().to_string(),
        },
        1 => MorphOp::Delete(*[Tag::new(0x0009, 0x0010), tags::PATIENT_BIRTH_DATE].choose(rng).unwrap()),
        _ => MorphOp::Copy {
            from: tags::ACCESSION_NUMBER,
            to: tags::STUDY_ID,
        },
    }
}

pub fn ruleset(rng: &mut impl Rng, version: u64) -> RuleSet {
    let destinations: Vec<DestinationDef> = (0..rng.gen_range(1..5))
        .map(|i| DestinationDef {
            name: format!("dest{i}"),
            host: "127.0.0.1".into(),
            port: 11000 + i as u16,
            called_ae: ae(&format!("DEST{i}")),
            calling_ae: if rng.gen_bool(0.3) { Some(ae("ROUTER")) } else { None },
        })
        .collect();
    let rules = (0..rng.gen_range(0..7))
        .map(|i| {
            let mut r = Rule::new(&format!("rule{i}"), expr(rng, 3));
            if rng.gen_bool(0.15) {
                r.block = true;
            }
            if rng.gen_bool(0.75) {
                let k = rng.gen_range(1..=destinations.len());
                let mut names: Vec<String> = destinations.choose_multiple(rng, k).map(|d| d.name.clone()).collect();
                if rng.gen_bool(0.2) {
                    names.push(names[0].clone());
                }
                r.route = Some(Route {
                    destinations: names,
                    mode: if rng.gen_bool(0.5) { RouteMode::Parallel } else { RouteMode::Serial },
                });
            }
            r.morphs = (0..rng.gen_range(0..3)).map(|_| morph(rng)).collect();
            if rng.gen_bool(0.4) {
                r.priority = Some(*[Priority::High, Priority::Medium, Priority::Low].choose(rng).unwrap());
            }
            r.cont = rng.gen_bool(0.4);
            r
        })
        .collect();
    RuleSet {
        version,
        sources: sources(),
        destinations,
        rules,
    }
}

/// Random instance attributes; each attribute may be absent, and the
/// numeric ones are sometimes malformed.
pub fn attributes(rng: &mut impl Rng) -> DataSet {
    let mut ds = DataSet::new();
    let texts: [(Tag, Vr, &[&str]); 6] = [
        (tags::MODALITY, Vr::CS, &MODALITIES),
        (tags::STUDY_DESCRIPTION, Vr::LO, &DESCRIPTIONS),
        (tags::SERIES_DESCRIPTION, Vr::LO, &DESCRIPTIONS),
        (tags::SOP_CLASS_UID, Vr::UI, &[sop::CT_IMAGE, sop::MR_IMAGE]),
        (tags::ACCESSION_NUMBER, Vr::SH, &ACCESSIONS),
        (INSTITUTION, Vr::LO, &["A", "B", "CAII"]),
    ];
    for (tag, vr, pool) in texts {
        if rng.gen_bool(0.75) {
            ds.set_text(tag, vr, pool.choose(rng).unwrap());
        }
    }
    if rng.gen_bool(0.75) {
        let t = if rng.gen_bool(0.1) { "abc".to_string() } else { THICKNESS.choose(rng).unwrap().to_string() };
        ds.set_text(tags::SLICE_THICKNESS, Vr::DS, &t);
    }
    if rng.gen_bool(0.6) {
        ds.put(DataElement::u16(tags::ROWS, *[8u16, 10, 512].choose(rng).unwrap()));
    }
    ds
}

pub fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
