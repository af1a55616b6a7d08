//! The routing gateway service and its operator commands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use flowgate::gateway::{admin_command, read_audit, AuditCategory, AuditFilter, Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "flowgate", version, about = "DICOM routing gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ask a running gateway to re-read its rules.
    Reload {
        /// Admin address of the running gateway.
        #[arg(long, conflicts_with = "config")]
        admin: Option<String>,
        /// Config file of the running gateway; its admin_port is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print audit events, oldest first.
    Audit {
        #[arg(long)]
        study: Option<String>,
        #[arg(long)]
        category: Option<String>,
        /// Audit log file. Defaults to the one named by --config.
        #[arg(long, conflicts_with = "config")]
        log: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a rules or gateway config file and print the parsed rules.
    Validate {
        #[arg(long)]
        rules: PathBuf,
    },
}

fn admin_address(admin: Option<String>, config: Option<PathBuf>) -> Result<String> {
    if let Some(a) = admin {
        return Ok(a);
    }
    let Some(path) = config else {
        bail!("give --admin or --config");
    };
    let cfg = GatewayConfig::load(&path)?;
    match cfg.admin_port {
        Some(p) if p != 0 => Ok(format!("127.0.0.1:{p}")),
        _ => bail!("{} sets no fixed admin_port", path.display()),
    }
}

fn serve(path: &Path) -> Result<()> {
    let cfg = GatewayConfig::load(path)?;
    let g = Gateway::start(cfg)?;
    println!("listening on {} as {}", g.local_addr(), g.config().ae_titles[0]);
    if let Some(a) = g.admin_addr() {
        println!("admin on {a}");
    }
    println!("audit log {}", g.audit_path().display());
    loop {
        std::thread::park();
    }
}

fn validate(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rules = if text.lines().any(|l| l.trim() == "[gateway]") {
        GatewayConfig::load(path)?.rules
    } else {
        flowgate::gateway::load_rules(path)?
    };
    println!(
        "{}: {} sources, {} destinations, {} rules",
        path.display(),
        rules.sources.len(),
        rules.destinations.len(),
        rules.rules.len()
    );
    print!("{}", flowgate::rules::format_rules(&rules));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve { config } => serve(&config),
        Command::Reload { admin, config } => {
            let addr = admin_address(admin, config)?;
            let reply = admin_command(&addr, "RELOAD", Duration::from_secs(10)).with_context(|| format!("contacting {addr}"))?;
            println!("{reply}");
            if reply.starts_with("OK") {
                Ok(())
            } else {
                std::process::exit(1)
            }
        }
        Command::Audit {
            study,
            category,
            log,
            config,
        } => {
            let log = match (log, config) {
                (Some(l), _) => l,
                (None, Some(c)) => GatewayConfig::load(&c)?.audit_log,
                (None, None) => bail!("give --log or --config"),
            };
            let category = match category {
                Some(c) => Some(AuditCategory::parse(&c).with_context(|| format!("unknown category {c:?}"))?),
                None => None,
            };
            let filter = AuditFilter {
                study_uid: study,
                category,
                ..AuditFilter::default()
            };
            for e in read_audit(&log, &filter)? {
                println!("{e}");
            }
            Ok(())
        }
        Command::Validate { rules } => validate(&rules),
    }
}
