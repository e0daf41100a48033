//! `cellfree` experiment runner.
//!
//! Exit codes: 0 on success, 1 when a cell or the comparison fails at run
//! time, 2 on invalid arguments or configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cellfree_core::experiment::{
    compare_schemes, format_rankings, run_experiment, ExperimentPlan, PlanOverrides, RunOptions,
};
use cellfree_core::Scheme;
use clap::{Parser, Subcommand};

const PAPER_DEFAULTS: &str = include_str!("../../../configs/paper_defaults.toml");
const DESK: &str = include_str!("../../../configs/desk.toml");

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "User-centric cell-free massive MIMO link-level simulator"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a plan and write per-cell CSV/JSON results.
    Run {
        /// Plan file (configuration sections plus an optional [sweep]).
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
        /// Override the master seed of every cell.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(short, long, default_value_t = 0)]
        jobs: usize,
        /// Comma-separated scheme names, e.g. gzf-duality,lzf-ppa.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Validate and list cells without running them.
        #[arg(long)]
        dry_run: bool,
        /// Dump channels, beamformers and power internals of one draw per cell.
        #[arg(long)]
        debug: bool,
    },
    /// Rank schemes by sum SE from result directories.
    Compare {
        /// Output directories (with manifest.json) or cell directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print a commented example configuration.
    ExampleConfig {
        /// The small desk-scale scenario instead of the full one.
        #[arg(long)]
        desk: bool,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn parse_schemes(names: &[String]) -> anyhow::Result<Vec<Scheme>> {
    names
        .iter()
        .map(|n| n.parse::<Scheme>().map_err(anyhow::Error::from))
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
            schemes,
            dry_run,
            debug,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))
                .map_err(Failure::Usage)?;
            let overrides = PlanOverrides {
                seed,
                schemes: schemes
                    .as_deref()
                    .map(parse_schemes)
                    .transpose()
                    .map_err(Failure::Usage)?,
            };
            let mut plan = ExperimentPlan::from_toml_str(&text, &out, &overrides)
                .with_context(|| format!("in {}", config.display()))
                .map_err(Failure::Usage)?;
            plan.jobs = jobs;
            if dry_run {
                for c in &plan.cells {
                    let s: Vec<&str> = c.schemes.iter().map(|s| s.name()).collect();
                    let ov: Vec<String> = c.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    println!("cell_{}  [{}]  {}", c.id, ov.join(" "), s.join(","));
                }
            }
            let report =
                run_experiment(&plan, &RunOptions { dry_run, debug }).map_err(|e| Failure::Runtime(e.into()))?;
            let failed: Vec<_> = report.failures().collect();
            if !failed.is_empty() {
                for f in &failed {
                    eprintln!("cell_{} failed: {}", f.id, f.error.as_deref().unwrap_or(""));
                }
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{} of {} cells failed",
                    failed.len(),
                    report.cells.len()
                )));
            }
            if !dry_run {
                println!("{} cells written to {}", report.cells.len(), out.display());
            }
            Ok(())
        }
        Command::Compare { paths, json } => {
            let rankings = compare_schemes(&paths).map_err(|e| Failure::Runtime(e.into()))?;
            if json {
                let s = serde_json::to_string_pretty(&rankings).map_err(|e| Failure::Runtime(e.into()))?;
                println!("{s}");
            } else {
                print!("{}", format_rankings(&rankings));
            }
            Ok(())
        }
        Command::ExampleConfig { desk } => {
            print!("{}", if desk { DESK } else { PAPER_DEFAULTS });
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
