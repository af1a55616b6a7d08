//! Runs an operator graph over a directory of DICOM files.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use flowgate::map::{parse_graph, run_app, RunConfig};

#[derive(Parser)]
#[command(name = "flowgate-map", version, about = "Operator-graph application runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the graph once and print the run manifest.
    Run {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Intensity above which a voxel counts as bright.
        #[arg(long)]
        threshold: Option<i32>,
        /// Fraction of bright voxels needed for a positive finding.
        #[arg(long)]
        min_fraction: Option<f64>,
        /// Seed for generated UIDs and timestamps.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run {
        graph,
        input,
        output,
        threshold,
        min_fraction,
        seed,
    } = Cli::parse().command;
    let text = std::fs::read_to_string(&graph).with_context(|| format!("reading {}", graph.display()))?;
    let g = parse_graph(&text).with_context(|| format!("in {}", graph.display()))?;
    let cfg = RunConfig {
        threshold,
        min_fraction,
        seed,
        ..RunConfig::default()
    };
    let manifest = run_app(&g, &input, &output, &cfg)?;
    print!("{}", manifest.render());
    if !manifest.succeeded() {
        std::process::exit(1);
    }
    Ok(())
}
