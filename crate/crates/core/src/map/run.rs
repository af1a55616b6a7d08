use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::par::{self, Execution};
use crate::uid::{Clock, SteppingClock, SystemClock, UidSource};

use super::graph::{validate_dag, AppGraph, OperatorSpec, Params};
use super::ops::{op_series_selector, op_series_to_volume, op_study_loader, op_stub_inference, op_write_sc, op_write_sr};
use super::{Error, InferenceResult, OpError, Series, Study, Volume};

/// Run-wide settings. Threshold and fraction override the graph's
/// stub inference parameters; a seed makes UIDs and timestamps
/// reproducible.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub threshold: Option<i32>,
    pub min_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub exec: Execution,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpStatus {
    Ok,
    Failed(String),
    Skipped,
}

#[derive(Clone, Debug)]
pub struct OperatorRecord {
    pub name: String,
    pub kind: &'static str,
    pub status: OpStatus,
    pub wall: Duration,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub input: PathBuf,
    pub output: PathBuf,
    /// In graph declaration order.
    pub operators: Vec<OperatorRecord>,
    pub result: Option<InferenceResult>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.operators.iter().all(|o| o.status == OpStatus::Ok)
    }

    pub fn written_files(&self) -> impl Iterator<Item = &PathBuf> {
        self.operators.iter().flat_map(|o| &o.outputs)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let status = if self.succeeded() { "ok" } else { "failed" };
        let _ = writeln!(s, "status = {status}");
        let _ = writeln!(s, "input = {}", self.input.display());
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "operators = {}", self.operators.len());
        for o in &self.operators {
            let p = format!("operator.{}", o.name);
            let _ = writeln!(s, "{p}.kind = {}", o.kind);
            match &o.status {
                OpStatus::Ok => {
                    let _ = writeln!(s, "{p}.status = ok");
                }
                OpStatus::Failed(cause) => {
                    let _ = writeln!(s, "{p}.status = failed");
                    let _ = writeln!(s, "{p}.cause = {cause}");
                }
                OpStatus::Skipped => {
                    let _ = writeln!(s, "{p}.status = skipped");
                }
            }
            let _ = writeln!(s, "{p}.wall_ms = {:.3}", o.wall.as_secs_f64() * 1000.0);
            for f in &o.outputs {
                let _ = writeln!(s, "{p}.wrote = {}", f.display());
            }
            for w in &o.warnings {
                let _ = writeln!(s, "{p}.warning = {w}");
            }
        }
        if let Some(r) = &self.result {
            let _ = writeln!(s, "result.detection = {}", r.detection);
            let _ = writeln!(s, "result.certainty = {}", r.certainty);
            if let Some(b) = r.bbox {
                let _ = writeln!(s, "result.bbox = {b}");
            }
            let _ = writeln!(s, "result.fraction = {}", r.fraction);
        }
        s
    }
}

#[derive(Clone)]
enum Value {
    Studies(Arc<Vec<Study>>),
    Series(Arc<Series>),
    Volume(Arc<Volume>),
    Result(Arc<InferenceResult>),
    File(PathBuf),
}

struct Produced {
    outputs: Vec<(&'static str, Value)>,
    warnings: Vec<String>,
}

struct Env<'a> {
    input: &'a Path,
    output: &'a Path,
    cfg: &'a RunConfig,
    uids: &'a UidSource,
    clock: &'a dyn Clock,
}

fn input<'v>(inputs: &'v HashMap<&str, Value>, port: &str) -> &'v Value {
    inputs.get(port).expect("validated graph feeds every input")
}

fn execute(op: &OperatorSpec, inputs: &HashMap<&str, Value>, env: &Env) -> Result<Produced, OpError> {
    let series = || match input(inputs, "series") {
        Value::Series(s) => s.clone(),
        _ => unreachable!("port types checked"),
    };
    let volume = || match input(inputs, "volume") {
        Value::Volume(v) => v.clone(),
        _ => unreachable!("port types checked"),
    };
    let result = || match input(inputs, "result") {
        Value::Result(r) => r.clone(),
        _ => unreachable!("port types checked"),
    };
    let one = |port, v| Produced {
        outputs: vec![(port, v)],
        warnings: Vec::new(),
    };
    Ok(match &op.params {
        Params::StudyLoader => {
            let loaded = op_study_loader(env.input, env.cfg.exec)?;
            Produced {
                outputs: vec![("studies", Value::Studies(Arc::new(loaded.studies)))],
                warnings: loaded.warnings,
            }
        }
        Params::SeriesSelector { criteria } => {
            let Value::Studies(studies) = input(inputs, "studies") else {
                unreachable!("port types checked")
            };
            let mut p = one("series", Value::Series(Arc::new(op_series_selector(studies, criteria)?)));
            if studies.len() > 1 {
                p.warnings.push(format!("{} studies in input; selected across all", studies.len()));
            }
            p
        }
        Params::SeriesToVolume { spacing_tolerance } => {
            one("volume", Value::Volume(Arc::new(op_series_to_volume(&series(), *spacing_tolerance)?)))
        }
        Params::StubInference { threshold, min_fraction } => {
            let t = env.cfg.threshold.unwrap_or(*threshold);
            let f = env.cfg.min_fraction.unwrap_or(*min_fraction);
            one("result", Value::Result(Arc::new(op_stub_inference(&volume(), t, f)?)))
        }
        Params::SrWriter { evaluation_type, priorities } => {
            let path = op_write_sr(&result(), &series().context, evaluation_type, *priorities, env.output, env.uids, env.clock)?;
            one("report", Value::File(path))
        }
        Params::ScWriter => {
            let path = op_write_sc(&result(), &volume(), &series().context, env.output, env.uids, env.clock)?;
            one("image", Value::File(path))
        }
    })
}

/// Runs the graph wave by wave; operators within a wave run
/// concurrently. The manifest is written to `output_dir/manifest.txt`
/// whether or not the run succeeds.
pub fn run_app(g: &AppGraph, input_dir: &Path, output_dir: &Path, cfg: &RunConfig) -> Result<RunManifest, Error> {
    let waves = validate_dag(g)?;
    if !input_dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input directory {} not found", input_dir.display()),
        )));
    }
    std::fs::create_dir_all(output_dir)?;
    let uids = match cfg.seed {
        Some(s) => UidSource::seeded(s),
        None => UidSource::from_entropy(),
    };
    let clock: Box<dyn Clock> = match cfg.seed {
        Some(_) => Box::new(SteppingClock::default_start()),
        None => Box::new(SystemClock),
    };
    let env = Env {
        input: input_dir,
        output: output_dir,
        cfg,
        uids: &uids,
        clock: clock.as_ref(),
    };

    let mut values: HashMap<(String, String), Value> = HashMap::new();
    let mut records: Vec<Option<OperatorRecord>> = vec![None; g.operators.len()];
    let mut first_failure: Option<(String, OpError)> = None;
    for wave in waves {
        let mut tasks = Vec::new();
        for &i in &wave {
            let op = &g.operators[i];
            let feeds: Vec<_> = g.edges.iter().filter(|e| e.to.0 == op.name).collect();
            let inputs: Option<HashMap<&str, Value>> = feeds
                .iter()
                .map(|e| values.get(&e.from).map(|v| (e.to.1.as_str(), v.clone())))
                .collect();
            match inputs {
                Some(inputs) => {
                    let env = &env;
                    tasks.push(move || {
                        let start = Instant::now();
                        let r = execute(op, &inputs, env);
                        (i, r, start.elapsed())
                    });
                }
                None => {
                    records[i] = Some(OperatorRecord {
                        name: op.name.clone(),
                        kind: op.kind().as_str(),
                        status: OpStatus::Skipped,
                        wall: Duration::ZERO,
                        outputs: Vec::new(),
                        warnings: Vec::new(),
                    });
                }
            }
        }
        for (i, r, wall) in par::join_all(cfg.exec, tasks) {
            let op = &g.operators[i];
            let mut rec = OperatorRecord {
                name: op.name.clone(),
                kind: op.kind().as_str(),
                status: OpStatus::Ok,
                wall,
                outputs: Vec::new(),
                warnings: Vec::new(),
            };
            match r {
                Ok(p) => {
                    rec.warnings = p.warnings;
                    for (port, v) in p.outputs {
                        if let Value::File(f) = &v {
                            rec.outputs.push(f.clone());
                        }
                        values.insert((op.name.clone(), port.to_string()), v);
                    }
                }
                Err(e) => {
                    rec.status = OpStatus::Failed(e.to_string());
                    if first_failure.is_none() {
                        first_failure = Some((op.name.clone(), e));
                    }
                }
            }
            records[i] = Some(rec);
        }
    }

    let result = g.operators.iter().find_map(|op| match values.get(&(op.name.clone(), "result".to_string())) {
        Some(Value::Result(r)) => Some((**r).clone()),
        _ => None,
    });
    let manifest = RunManifest {
        input: input_dir.to_path_buf(),
        output: output_dir.to_path_buf(),
        operators: records.into_iter().map(|r| r.expect("every operator recorded")).collect(),
        result,
    };
    std::fs::write(output_dir.join("manifest.txt"), manifest.render())?;
    match first_failure {
        Some((operator, cause)) => Err(Error::OperatorFailed { operator, cause }),
        None => Ok(manifest),
    }
}
