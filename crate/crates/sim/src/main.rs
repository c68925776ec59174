use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use cellfree_sim::config::{Policy, Scenario, ScenarioConfig};
use cellfree_sim::harness::{self, RunOptions};
use cellfree_sim::output::{self, Manifest};
use clap::{Parser, Subcommand};
use log::{error, info, warn};

const EXIT_CONFIG: u8 = 2;
const EXIT_ANOMALY: u8 = 3;

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO mobility simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Also write traces.csv.
        #[arg(long)]
        traces: bool,
    },
    /// Check a configuration file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump UE mobility traces only.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "traces.csv")]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Anomaly(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(path: &Path, seed: Option<u64>, policy: Option<Policy>) -> Result<Scenario, Failure> {
    let mut cfg = ScenarioConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = policy {
        cfg.policy = p;
    }
    Scenario::new(cfg).map_err(|e| Failure::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let sc = load(&config, None, None)?;
            println!(
                "ok: {} APs, {} UEs, {} buildings, {} free pixels",
                sc.aps.len(),
                sc.config.n_ues,
                sc.map.buildings().len(),
                sc.map.free_pixel_count()
            );
            Ok(())
        }
        Command::Trace { config, seed, out } => {
            let sc = load(&config, seed, None)?;
            let mut rows = Vec::new();
            for d in 0..sc.config.n_drops {
                let (r, diag) = harness::mobility_trace(&sc, d).map_err(|e| Failure::Other(e.into()))?;
                if diag.anomalies() > 0 {
                    warn!("drop {d}: {} scan caps, {} waypoint caps", diag.scan_capped, diag.target_capped);
                }
                rows.extend(r);
            }
            output::write_traces(&out, &rows)?;
            info!("wrote {} trace rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Run { config, seed, policy, out, threads, traces } => {
            let sc = load(&config, seed, policy)?;
            let started = Instant::now();
            let result = harness::run(&sc, RunOptions { threads, traces }).map_err(|e| Failure::Other(e.into()))?;
            let diag = &result.summary.diagnostics;
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                seed: sc.config.seed,
                policy: sc.config.policy.as_str(),
                threads: threads.unwrap_or_else(rayon::current_num_threads),
                runtime_s: started.elapsed().as_secs_f64(),
                anomalies: diag.anomalies(),
                anomaly_budget: sc.config.anomaly_budget,
                config: &sc.config,
            };
            output::write_run(&out, &manifest, &result)?;
            info!("wrote results to {} in {:.1} s", out.display(), manifest.runtime_s);
            if diag.invariant_violations > 0 {
                return Err(Failure::Anomaly(format!(
                    "{} invariant violations, e.g. {}",
                    diag.invariant_violations,
                    diag.violation_samples.first().map_or("", String::as_str)
                )));
            }
            if diag.anomalies() > sc.config.anomaly_budget {
                return Err(Failure::Anomaly(format!(
                    "{} runtime anomalies exceed the budget of {}",
                    diag.anomalies(),
                    sc.config.anomaly_budget
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Anomaly(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_ANOMALY)
        }
        Err(Failure::Other(e)) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
