use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbl_cli::config::{parse_config, ExperimentConfig};
use rbl_cli::report::RunReport;
use rbl_cli::runner::{self, RunError};
use rbl_core::engine::{Scheduling, WorldConfig};

/// Exit status when a run loses clearance.
const EXIT_SAFETY: u8 = 1;
/// Exit status for an unreadable or invalid config.
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "rbl", version, about = "Rule-based Lloyd multi-robot planner experiments")]
struct Cli {
    /// Worker threads for independent runs; 0 uses every core.
    #[arg(long, global = true, env = "RBL_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario and seed of a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the metric table of every summary.json under a directory.
    Summarize { dir: PathBuf },
    /// Run the three deadlock fixtures and the frozen-rule control.
    Fixtures {
        #[arg(long, value_enum, default_value = "sync")]
        scheduling: SchedArg,
        /// Seconds of simulated time per fixture.
        #[arg(long, default_value_t = 30.0)]
        max_time: f64,
        /// Write logs, plots and summary.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchedArg {
    Sync,
    Async,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn run_error(e: RunError) -> (u8, String) {
    match e {
        RunError::Config(c) => (EXIT_CONFIG, c.to_string()),
        other => (EXIT_IO, other.to_string()),
    }
}

fn finish(report: &RunReport) -> u8 {
    print!("{}", report.table());
    if report.any_safety_violation() {
        EXIT_SAFETY
    } else {
        0
    }
}

fn dispatch(cli: Cli) -> Result<u8, (u8, String)> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let report = runner::run_experiment(&cfg, cli.workers).map_err(run_error)?;
            println!("{} runs, artifacts in {}", report.n_runs, cfg.output_dir.display());
            Ok(finish(&report))
        }
        Command::Summarize { dir } => {
            let paths = runner::find_summaries(&dir).map_err(|e| (EXIT_IO, format!("{}: {e}", dir.display())))?;
            if paths.is_empty() {
                return Err((EXIT_IO, format!("no summary.json under {}", dir.display())));
            }
            let mut code = 0;
            for p in paths {
                let report = runner::load_summary(&p).map_err(run_error)?;
                println!("{}", p.display());
                code = code.max(finish(&report));
            }
            Ok(code)
        }
        Command::Fixtures {
            scheduling,
            max_time,
            out,
        } => {
            let world = WorldConfig {
                scheduling: match scheduling {
                    SchedArg::Sync => Scheduling::Sync,
                    SchedArg::Async => Scheduling::Async,
                },
                ..WorldConfig::default()
            };
            let plans = runner::fixture_plans(&world, max_time);
            let report = runner::run_plans(&plans, cli.workers, out.as_deref()).map_err(run_error)?;
            Ok(finish(&report))
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let plans = cfg.validate().map_err(|e| (EXIT_CONFIG, format!("{}: {e}", config.display())))?;
            println!("{}: ok, {} runs", config.display(), plans.len());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
