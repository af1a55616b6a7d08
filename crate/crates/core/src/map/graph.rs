use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::conf::{parse_sections, ConfError, Section};
use crate::rules::{parse_expr, MatchExpr, Priority};

use super::ops::{PriorityMapping, DEFAULT_MIN_FRACTION, DEFAULT_SPACING_TOLERANCE, DEFAULT_THRESHOLD};
use super::Error;

/// Loader, selector, volume, stub inference and SR writer in a chain.
pub const STANDARD_GRAPH: &str = "\
[operator loader]
kind = study_loader

[operator selector]
kind = series_selector
criteria = true

[operator volume]
kind = series_to_volume

[operator inference]
kind = stub_inference

[operator report]
kind = sr_writer
evaluation_type = MONAI

[edge]
from = loader.studies
to = selector.studies

[edge]
from = selector.series
to = volume.series

[edge]
from = volume.volume
to = inference.volume

[edge]
from = inference.result
to = report.result

[edge]
from = selector.series
to = report.series
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortType {
    Studies,
    Series,
    Volume,
    Result,
    File,
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PortType::Studies => "studies",
            PortType::Series => "series",
            PortType::Volume => "volume",
            PortType::Result => "result",
            PortType::File => "file",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    StudyLoader,
    SeriesSelector,
    SeriesToVolume,
    StubInference,
    SrWriter,
    ScWriter,
}

type Ports = &'static [(&'static str, PortType)];

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::StudyLoader,
        OperatorKind::SeriesSelector,
        OperatorKind::SeriesToVolume,
        OperatorKind::StubInference,
        OperatorKind::SrWriter,
        OperatorKind::ScWriter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::StudyLoader => "study_loader",
            OperatorKind::SeriesSelector => "series_selector",
            OperatorKind::SeriesToVolume => "series_to_volume",
            OperatorKind::StubInference => "stub_inference",
            OperatorKind::SrWriter => "sr_writer",
            OperatorKind::ScWriter => "sc_writer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn inputs(self) -> Ports {
        match self {
            OperatorKind::StudyLoader => &[],
            OperatorKind::SeriesSelector => &[("studies", PortType::Studies)],
            OperatorKind::SeriesToVolume => &[("series", PortType::Series)],
            OperatorKind::StubInference => &[("volume", PortType::Volume)],
            OperatorKind::SrWriter => &[("result", PortType::Result), ("series", PortType::Series)],
            OperatorKind::ScWriter => &[
                ("result", PortType::Result),
                ("volume", PortType::Volume),
                ("series", PortType::Series),
            ],
        }
    }

    pub fn outputs(self) -> Ports {
        match self {
            OperatorKind::StudyLoader => &[("studies", PortType::Studies)],
            OperatorKind::SeriesSelector => &[("series", PortType::Series)],
            OperatorKind::SeriesToVolume => &[("volume", PortType::Volume)],
            OperatorKind::StubInference => &[("result", PortType::Result)],
            OperatorKind::SrWriter => &[("report", PortType::File)],
            OperatorKind::ScWriter => &[("image", PortType::File)],
        }
    }

    fn param_keys(self) -> &'static [&'static str] {
        match self {
            OperatorKind::StudyLoader | OperatorKind::ScWriter => &["kind"],
            OperatorKind::SeriesSelector => &["kind", "criteria"],
            OperatorKind::SeriesToVolume => &["kind", "spacing_tolerance"],
            OperatorKind::StubInference => &["kind", "threshold", "min_fraction"],
            OperatorKind::SrWriter => &["kind", "evaluation_type", "priority_pos", "priority_neg"],
        }
    }
}

/// Typed operator parameters; the variant fixes the operator kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    StudyLoader,
    SeriesSelector { criteria: MatchExpr },
    SeriesToVolume { spacing_tolerance: f64 },
    StubInference { threshold: i32, min_fraction: f64 },
    SrWriter { evaluation_type: String, priorities: PriorityMapping },
    ScWriter,
}

impl Params {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Params::StudyLoader => OperatorKind::StudyLoader,
            Params::SeriesSelector { .. } => OperatorKind::SeriesSelector,
            Params::SeriesToVolume { .. } => OperatorKind::SeriesToVolume,
            Params::StubInference { .. } => OperatorKind::StubInference,
            Params::SrWriter { .. } => OperatorKind::SrWriter,
            Params::ScWriter => OperatorKind::ScWriter,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpec {
    pub name: String,
    pub params: Params,
    pub line: usize,
}

impl OperatorSpec {
    pub fn kind(&self) -> OperatorKind {
        self.params.kind()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// (operator, port)
    pub from: (String, String),
    pub to: (String, String),
}

impl Edge {
    pub fn new(from: &str, to: &str) -> Self {
        let split = |s: &str| match s.rsplit_once('.') {
            Some((op, port)) => (op.to_string(), port.to_string()),
            None => (s.to_string(), String::new()),
        };
        Edge {
            from: split(from),
            to: split(to),
        }
    }

    fn producer_text(&self) -> String {
        format!("{}.{}", self.from.0, self.from.1)
    }

    fn consumer_text(&self) -> String {
        format!("{}.{}", self.to.0, self.to.1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AppGraph {
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<Edge>,
}

impl AppGraph {
    pub fn operator(&self, name: &str) -> Option<&OperatorSpec> {
        self.operators.iter().find(|o| o.name == name)
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.operators.iter().position(|o| o.name == name)
    }
}

fn parse_params(kind: OperatorKind, s: &Section) -> Result<Params, ConfError> {
    s.check_keys(kind.param_keys())?;
    Ok(match kind {
        OperatorKind::StudyLoader => Params::StudyLoader,
        OperatorKind::ScWriter => Params::ScWriter,
        OperatorKind::SeriesSelector => {
            let e = s.require("criteria")?;
            let criteria = parse_expr(&e.value)
                .map_err(|x| ConfError::new(e.line, e.column + x.column - 1, x.message))?;
            Params::SeriesSelector { criteria }
        }
        OperatorKind::SeriesToVolume => {
            let spacing_tolerance = match s.get("spacing_tolerance")? {
                Some(e) => e.parse::<f64>().and_then(|v| {
                    if v > 0.0 && v.is_finite() {
                        Ok(v)
                    } else {
                        Err(e.error("spacing_tolerance must be positive"))
                    }
                })?,
                None => DEFAULT_SPACING_TOLERANCE,
            };
            Params::SeriesToVolume { spacing_tolerance }
        }
        OperatorKind::StubInference => {
            let threshold = s.get("threshold")?.map(|e| e.parse::<i32>()).transpose()?.unwrap_or(DEFAULT_THRESHOLD);
            let min_fraction = match s.get("min_fraction")? {
                Some(e) => {
                    let f = e.parse::<f64>()?;
                    if !(f > 0.0 && f <= 1.0) {
                        return Err(e.error("min_fraction must be in (0, 1]"));
                    }
                    f
                }
                None => DEFAULT_MIN_FRACTION,
            };
            Params::StubInference { threshold, min_fraction }
        }
        OperatorKind::SrWriter => {
            let evaluation_type = s.get("evaluation_type")?.map_or("MONAI".to_string(), |e| e.value.clone());
            let prio = |key, default| -> Result<Priority, ConfError> {
                s.get(key)?.map(|e| e.parse::<Priority>()).transpose().map(|p| p.unwrap_or(default))
            };
            Params::SrWriter {
                evaluation_type,
                priorities: PriorityMapping {
                    pos: prio("priority_pos", Priority::High)?,
                    neg: prio("priority_neg", Priority::Low)?,
                },
            }
        }
    })
}

/// Parses a graph file: `[operator NAME]` sections with `kind` and
/// parameters, and `[edge]` sections with `from` / `to` endpoints written
/// `operator.port`.
pub fn parse_graph(text: &str) -> Result<AppGraph, Error> {
    let mut g = AppGraph::default();
    for s in parse_sections(text)? {
        match s.kind.as_str() {
            "operator" => {
                let name = s.name_or_err()?.to_string();
                if g.operator(&name).is_some() {
                    return Err(s.error(format!("operator {name} defined twice")).into());
                }
                let k = s.require("kind")?;
                let kind = OperatorKind::parse(&k.value)
                    .ok_or_else(|| k.error(format!("unknown operator kind {:?}", k.value)))?;
                let params = parse_params(kind, &s)?;
                g.operators.push(OperatorSpec { name, params, line: s.line });
            }
            "edge" => {
                s.check_keys(&["from", "to"])?;
                g.edges.push(Edge::new(&s.require("from")?.value, &s.require("to")?.value));
            }
            other => return Err(s.error(format!("unknown section kind {other:?}")).into()),
        }
    }
    Ok(g)
}

fn port_type(ports: Ports, name: &str) -> Option<PortType> {
    ports.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Checks the graph and returns execution waves: every operator's
/// producers sit in earlier waves.
pub fn validate_dag(g: &AppGraph) -> Result<Vec<Vec<usize>>, Error> {
    let n = g.operators.len();
    let mut links = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let from = g
            .index(&e.from.0)
            .filter(|&i| port_type(g.operators[i].kind().outputs(), &e.from.1).is_some())
            .ok_or_else(|| Error::UnknownPort(e.producer_text()))?;
        let to = g
            .index(&e.to.0)
            .filter(|&i| port_type(g.operators[i].kind().inputs(), &e.to.1).is_some())
            .ok_or_else(|| Error::UnknownPort(e.consumer_text()))?;
        links.push((from, to));
    }

    let mut succ = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for &(a, b) in &links {
        succ[a].push(b);
        indegree[b] += 1;
    }
    let mut level = vec![0usize; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut done = 0;
    while let Some(i) = ready.pop() {
        done += 1;
        for &j in &succ[i] {
            level[j] = level[j].max(level[i] + 1);
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(j);
            }
        }
    }
    if done < n {
        return Err(Error::CycleDetected(find_cycle(g, &succ, &indegree)));
    }

    for e in &g.edges {
        let produced = port_type(g.operator(&e.from.0).unwrap().kind().outputs(), &e.from.1).unwrap();
        let expected = port_type(g.operator(&e.to.0).unwrap().kind().inputs(), &e.to.1).unwrap();
        if produced != expected {
            return Err(Error::PortTypeMismatch {
                from: e.producer_text(),
                to: e.consumer_text(),
                produced,
                expected,
            });
        }
    }
    let mut fed = HashSet::new();
    for e in &g.edges {
        if !fed.insert(&e.to) {
            return Err(Error::DuplicateInput {
                operator: e.to.0.clone(),
                port: e.to.1.clone(),
            });
        }
    }
    for op in &g.operators {
        for (port, _) in op.kind().inputs() {
            if !fed.contains(&(op.name.clone(), port.to_string())) {
                return Err(Error::DanglingInput {
                    operator: op.name.clone(),
                    port: port.to_string(),
                });
            }
        }
    }

    let mut waves: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in level.iter().enumerate() {
        waves.entry(*l).or_default().push(i);
    }
    Ok(waves.into_values().collect())
}

/// Walks back through unresolved predecessors until a node repeats. The
/// remaining in-degree of a stuck node only counts stuck predecessors, so
/// the walk never dead-ends.
fn find_cycle(g: &AppGraph, succ: &[Vec<usize>], indegree: &[usize]) -> Vec<String> {
    let stuck = |i: usize| indegree[i] > 0;
    let mut pred = vec![Vec::new(); succ.len()];
    for (a, outs) in succ.iter().enumerate() {
        for &b in outs {
            pred[b].push(a);
        }
    }
    let mut cur = (0..succ.len()).find(|&i| stuck(i)).expect("a stuck node");
    let mut path: Vec<usize> = Vec::new();
    loop {
        if let Some(pos) = path.iter().position(|&p| p == cur) {
            let mut names: Vec<String> = path[pos..].iter().rev().map(|&i| g.operators[i].name.clone()).collect();
            names.insert(0, g.operators[cur].name.clone());
            return names;
        }
        path.push(cur);
        cur = pred[cur].iter().copied().find(|&j| stuck(j)).expect("stuck predecessor");
    }
}
