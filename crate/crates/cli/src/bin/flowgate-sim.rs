//! Simulators for exercising the gateway: a modality, storage and MLLP
//! sinks, and the end-to-end scenario runner.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use flowgate::dimse::AeTitle;
use flowgate::sim::{
    cli_modality_send, gen_synthetic_study, parse_scenarios, run_mllp_sink, run_scenario, run_store_sink, AckMode,
    Scenario, ScenarioKind, SinkScript,
};

#[derive(Parser)]
#[command(name = "flowgate-sim", version, about = "Gateway simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic chest CT study.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// bright (with a lesion-like block) or zero.
        #[arg(long, default_value = "bright")]
        kind: String,
        #[arg(long, default_value_t = 3)]
        slices: usize,
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
    },
    /// Send every .dcm file under a directory, like a modality.
    Send {
        #[arg(long)]
        dir: PathBuf,
        /// host:port of the receiver.
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value = "MODALITY")]
        calling: String,
        #[arg(long, default_value = "FLOWGATE")]
        called: String,
    },
    /// Storage receiver that records what it is sent.
    Sink {
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: String,
        #[arg(long, default_value = "PACS")]
        ae: String,
        #[arg(long)]
        out: PathBuf,
        /// Scripted behaviour, e.g. "delay=300 fail_first=2 status=A700".
        #[arg(long, default_value = "")]
        script: String,
    },
    /// HL7 receiver that records messages and acknowledges them.
    MllpSink {
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: String,
        #[arg(long)]
        out: PathBuf,
        /// AA, AE or none.
        #[arg(long, default_value = "AA")]
        ack: String,
    },
    /// Run scenarios from a file and print one line per check.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        work: Option<PathBuf>,
        /// Run only the named scenario.
        #[arg(long)]
        only: Option<String>,
    },
}

fn ae(s: &str) -> Result<AeTitle> {
    s.parse().map_err(|e| anyhow!("AE title {s:?}: {e}"))
}

fn wait_forever() -> ! {
    loop {
        std::thread::park();
    }
}

fn scenarios(config: &Path, work: Option<PathBuf>, only: Option<String>) -> Result<bool> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut list = parse_scenarios(&text).map_err(|e| anyhow!("{}: {e}", config.display()))?;
    if let Some(name) = &only {
        list.retain(|s| &s.name == name);
        if list.is_empty() {
            bail!("no scenario named {name}");
        }
    }
    let work = work.unwrap_or_else(|| std::env::temp_dir().join(format!("flowgate-sim-{}", std::process::id())));
    let mut all = true;
    for sc in &list {
        let report = run_scenario(sc, &work.join(&sc.name))?;
        println!("{report}");
        all &= report.passed();
    }
    Ok(all)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Gen {
            out,
            seed,
            kind,
            slices,
            rows,
            cols,
        } => {
            let kind = ScenarioKind::parse(&kind).filter(|k| *k != ScenarioKind::AiDown);
            let mut sc = Scenario::new("gen", kind.ok_or_else(|| anyhow!("kind must be bright or zero"))?);
            sc.seed = seed;
            sc.slices = slices;
            sc.rows = rows;
            sc.cols = cols;
            let paths = gen_synthetic_study(&sc.study_spec(), &out)?;
            println!("wrote {} files to {}", paths.len(), out.display());
        }
        Command::Send {
            dir,
            endpoint,
            calling,
            called,
        } => {
            let summary = cli_modality_send(&dir, &endpoint, &ae(&calling)?, &ae(&called)?)?;
            for (path, status) in &summary.files {
                println!("{:#06X} {}", status, path.display());
            }
            println!("{summary}");
            if !summary.all_succeeded() {
                std::process::exit(1);
            }
        }
        Command::Sink { bind, ae: title, out, script } => {
            let script: SinkScript = script.parse().map_err(|e| anyhow!("script: {e}"))?;
            let sink = run_store_sink(&bind, ae(&title)?, &out, script)?;
            println!("storage sink {} on {}, manifest {}", title, sink.local_addr(), sink.manifest_path().display());
            wait_forever();
        }
        Command::MllpSink { bind, out, ack } => {
            let mode: AckMode = ack.parse().map_err(|e| anyhow!("ack: {e}"))?;
            let sink = run_mllp_sink(&bind, mode, &out)?;
            println!("MLLP sink on {}, messages in {}", sink.local_addr(), sink.dir().display());
            wait_forever();
        }
        Command::Scenario { config, work, only } => {
            if !scenarios(&config, work, only)? {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
