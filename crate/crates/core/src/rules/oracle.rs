//! Reference evaluator for tests: walks the expression tree directly,
//! reads attributes afresh for every predicate and compiles each regular
//! expression on use.

use regex::Regex;

use crate::dicom::DataSet;

use super::{BlockReason, CmpOp, Decision, Literal, MatchExpr, Predicate, RuleSet, Selector, SourceDef};

fn text_of(sel: Selector, ds: &DataSet, source: &SourceDef) -> Option<String> {
    match sel {
        Selector::Source => Some(source.name.clone()),
        other => ds.get(other.tag()?)?.as_str().map(str::to_string),
    }
}

fn number_of(sel: Selector, ds: &DataSet) -> Option<f64> {
    ds.get(sel.tag()?)?.as_f64().ok()
}

fn holds(p: &Predicate, ds: &DataSet, source: &SourceDef) -> bool {
    match &p.literal {
        Literal::Num(n) => {
            let Some(v) = number_of(p.selector, ds) else {
                return false;
            };
            match p.op {
                CmpOp::Eq => v == *n,
                CmpOp::Ne => v != *n,
                CmpOp::Lt => v < *n,
                CmpOp::Le => v <= *n,
                CmpOp::Gt => v > *n,
                CmpOp::Ge => v >= *n,
                CmpOp::Match => false,
            }
        }
        Literal::Str(s) => match text_of(p.selector, ds, source) {
            None => false,
            Some(v) => match p.op {
                CmpOp::Eq => v == *s,
                CmpOp::Ne => v != *s,
                _ => false,
            },
        },
        Literal::Pattern(pat) => match text_of(p.selector, ds, source) {
            None => false,
            Some(v) => Regex::new(pat.source()).map(|re| re.is_match(&v)).unwrap_or(false),
        },
    }
}

fn truth(e: &MatchExpr, ds: &DataSet, source: &SourceDef) -> bool {
    match e {
        MatchExpr::Const(b) => *b,
        MatchExpr::Pred(p) => holds(p, ds, source),
        MatchExpr::Not(x) => !truth(x, ds, source),
        MatchExpr::And(xs) => {
            let mut all = true;
            for x in xs {
                all &= truth(x, ds, source);
            }
            all
        }
        MatchExpr::Or(xs) => {
            let mut any = false;
            for x in xs {
                any |= truth(x, ds, source);
            }
            any
        }
    }
}

pub fn oracle_evaluate(rs: &RuleSet, ds: &DataSet, source: &SourceDef) -> Decision {
    let mut matched = Vec::new();
    let mut destinations: Vec<(String, super::RouteMode)> = Vec::new();
    let mut morphs = Vec::new();
    let mut priorities = Vec::new();
    let mut blocker = None;
    for rule in &rs.rules {
        if !truth(&rule.when, ds, source) {
            continue;
        }
        matched.push(rule.name.clone());
        if rule.block {
            blocker = Some(rule.name.clone());
            break;
        }
        if let Some(route) = &rule.route {
            for name in &route.destinations {
                destinations.push((name.clone(), route.mode));
            }
        }
        morphs.extend(rule.morphs.clone());
        priorities.extend(rule.priority);
        if !rule.cont {
            break;
        }
    }
    let mut deduped: Vec<(String, super::RouteMode)> = Vec::new();
    for d in destinations {
        if deduped.iter().all(|(n, _)| *n != d.0) {
            deduped.push(d);
        }
    }
    let (blocked, block_reason) = match (blocker, matched.is_empty()) {
        (Some(name), _) => (true, Some(BlockReason::Rule(name))),
        (None, true) => (true, Some(BlockReason::NoMatch)),
        (None, false) => (false, None),
    };
    Decision {
        ruleset_version: rs.version,
        matched,
        destinations: if blocked { Vec::new() } else { deduped },
        morphs,
        priority: priorities.first().copied(),
        blocked,
        block_reason,
    }
}
