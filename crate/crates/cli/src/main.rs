//! `tse`: bin trajectories, run the solver, and drive experiment sweeps from
//! a declarative run configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tse_core::parallel::Execution;

#[derive(Parser)]
#[command(name = "tse", version, about = "Freeway speed-field estimation from sparse vehicle trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin trajectories into a state matrix (CSV + sidecar + PGM heatmap).
    BuildGrid(Common),
    /// Complete one matrix, optionally after injecting corruption.
    Estimate(Common),
    /// Run a tse, rtse, sensitivity or ablation sweep.
    Experiment(Common),
    /// Generate synthetic trajectories and their ground-truth field.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration, JSON or TOML (`.toml`). A previous manifest.json
    /// also works.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overrides `experiment.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for repetitions; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted-path override, e.g. `--set solver.lambda=0.04`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exit code 2.
    Config(String),
    /// Failure while running; exit code 3.
    Runtime(String),
}

impl From<tse_core::Error> for CliError {
    fn from(e: tse_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn execution(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads: must be >= 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}

type Action = fn(&commands::Context) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, action): (Common, Action) = match cli.command {
        Command::BuildGrid(c) => (c, commands::build_grid),
        Command::Estimate(c) => (c, commands::estimate),
        Command::Experiment(c) => (c, commands::experiment),
        Command::Synth(c) => (c, commands::synth),
    };
    let overrides = config::Overrides {
        sets: common.sets,
        seed: common.seed,
        out: common.out,
    };
    let config = config::resolve(&common.config, &overrides)?;
    let execution = execution(common.threads)?;
    action(&commands::Context { config, execution })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
