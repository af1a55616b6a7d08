//! Compiled rule evaluation. Selectors are resolved to value slots once
//! per rule set, and each instance's attributes are read once per call.

use regex::Regex;

use crate::dicom::DataSet;
use crate::par::{self, Execution};

use super::{BlockReason, CmpOp, Decision, Literal, MatchExpr, RuleSet, Selector, SourceDef};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    selector: Selector,
    numeric: bool,
}

#[derive(Debug)]
enum Test {
    StrEq(String),
    StrNe(String),
    Regex(Regex),
    Num(CmpOp, f64),
}

#[derive(Debug)]
enum Compiled {
    Const(bool),
    Test(usize, Test),
    Not(Box<Compiled>),
    All(Vec<Compiled>),
    Any(Vec<Compiled>),
}

#[derive(Clone, Debug)]
enum Value {
    Str(String),
    Num(f64),
}

fn slot_index(slots: &mut Vec<Slot>, s: Slot) -> usize {
    match slots.iter().position(|x| *x == s) {
        Some(i) => i,
        None => {
            slots.push(s);
            slots.len() - 1
        }
    }
}

fn compile(e: &MatchExpr, slots: &mut Vec<Slot>) -> Compiled {
    match e {
        MatchExpr::Const(b) => Compiled::Const(*b),
        MatchExpr::Not(x) => Compiled::Not(Box::new(compile(x, slots))),
        MatchExpr::And(xs) => Compiled::All(xs.iter().map(|x| compile(x, slots)).collect()),
        MatchExpr::Or(xs) => Compiled::Any(xs.iter().map(|x| compile(x, slots)).collect()),
        MatchExpr::Pred(p) => {
            let numeric = matches!(p.literal, Literal::Num(_));
            let slot = slot_index(
                slots,
                Slot {
                    selector: p.selector,
                    numeric,
                },
            );
            let test = match (&p.literal, p.op) {
                (Literal::Num(n), op) => Test::Num(op, *n),
                (Literal::Pattern(pat), _) => Test::Regex(pat.regex().clone()),
                (Literal::Str(s), CmpOp::Ne) => Test::StrNe(s.clone()),
                (Literal::Str(s), _) => Test::StrEq(s.clone()),
            };
            Compiled::Test(slot, test)
        }
    }
}

fn read_slot(slot: Slot, ds: &DataSet, source: &SourceDef) -> Option<Value> {
    if slot.selector == Selector::Source {
        return Some(Value::Str(source.name.clone()));
    }
    let e = ds.get(slot.selector.tag()?)?;
    if slot.numeric {
        e.as_f64().ok().map(Value::Num)
    } else {
        e.as_str().map(|s| Value::Str(s.to_string()))
    }
}

impl Compiled {
    fn eval(&self, values: &[Option<Value>]) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Not(x) => !x.eval(values),
            Compiled::All(xs) => xs.iter().all(|x| x.eval(values)),
            Compiled::Any(xs) => xs.iter().any(|x| x.eval(values)),
            Compiled::Test(slot, test) => match (&values[*slot], test) {
                (None, _) => false,
                (Some(Value::Str(v)), Test::StrEq(s)) => v == s,
                (Some(Value::Str(v)), Test::StrNe(s)) => v != s,
                (Some(Value::Str(v)), Test::Regex(re)) => re.is_match(v),
                (Some(Value::Num(v)), Test::Num(op, n)) => match op {
                    CmpOp::Eq => v == n,
                    CmpOp::Ne => v != n,
                    CmpOp::Lt => v < n,
                    CmpOp::Le => v <= n,
                    CmpOp::Gt => v > n,
                    CmpOp::Ge => v >= n,
                    CmpOp::Match => false,
                },
                _ => false,
            },
        }
    }
}

/// A rule set with its matchers compiled. Cheap to share behind an `Arc`.
#[derive(Debug)]
pub struct Engine {
    rules: RuleSet,
    compiled: Vec<Compiled>,
    slots: Vec<Slot>,
}

impl Engine {
    pub fn new(rules: RuleSet) -> Self {
        let mut slots = Vec::new();
        let compiled = rules.rules.iter().map(|r| compile(&r.when, &mut slots)).collect();
        Engine { rules, compiled, slots }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn version(&self) -> u64 {
        self.rules.version
    }

    pub fn evaluate(&self, ds: &DataSet, source: &SourceDef) -> Decision {
        let values: Vec<Option<Value>> = self.slots.iter().map(|s| read_slot(*s, ds, source)).collect();
        let mut d = Decision {
            ruleset_version: self.rules.version,
            matched: Vec::new(),
            destinations: Vec::new(),
            morphs: Vec::new(),
            priority: None,
            blocked: false,
            block_reason: None,
        };
        for (rule, expr) in self.rules.rules.iter().zip(&self.compiled) {
            if !expr.eval(&values) {
                continue;
            }
            d.matched.push(rule.name.clone());
            if rule.block {
                d.blocked = true;
                d.block_reason = Some(BlockReason::Rule(rule.name.clone()));
                d.destinations.clear();
                return d;
            }
            if let Some(route) = &rule.route {
                for name in &route.destinations {
                    if !d.destinations.iter().any(|(n, _)| n == name) {
                        d.destinations.push((name.clone(), route.mode));
                    }
                }
            }
            d.morphs.extend(rule.morphs.iter().cloned());
            if d.priority.is_none() {
                d.priority = rule.priority;
            }
            if !rule.cont {
                break;
            }
        }
        if d.matched.is_empty() {
            d.blocked = true;
            d.block_reason = Some(BlockReason::NoMatch);
        }
        d
    }
}

/// One compiled match expression, for callers that filter datasets
/// without a full rule set.
#[derive(Debug)]
pub struct Matcher {
    compiled: Compiled,
    slots: Vec<Slot>,
}

impl Matcher {
    pub fn new(expr: &MatchExpr) -> Self {
        let mut slots = Vec::new();
        let compiled = compile(expr, &mut slots);
        Matcher { compiled, slots }
    }

    pub fn matches(&self, ds: &DataSet, source: &SourceDef) -> bool {
        let values: Vec<Option<Value>> = self.slots.iter().map(|s| read_slot(*s, ds, source)).collect();
        self.compiled.eval(&values)
    }
}

pub fn evaluate_instance(rs: &RuleSet, ds: &DataSet, source: &SourceDef) -> Decision {
    Engine::new(rs.clone()).evaluate(ds, source)
}

/// Evaluates many instances against one engine.
pub fn evaluate_batch(engine: &Engine, items: &[(&DataSet, &SourceDef)], exec: Execution) -> Vec<Decision> {
    par::map(exec, items, |(ds, src)| engine.evaluate(ds, src))
}
