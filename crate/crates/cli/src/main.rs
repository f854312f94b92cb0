//! `pilotwave`: arrival-time experiments from the command line.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run fails. The thread count comes from `PILOTWAVE_THREADS`.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const THREADS_ENV: &str = "PILOTWAVE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "pilotwave", version, about = "Bohmian and stochastic arrival-time simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a trajectory ensemble and write arrivals, histogram and snapshots.
    Trajectories(TrajectoryArgs),
    /// Solve for the first-arrival flux without sampling trajectories.
    FokkerPlanck(FpArgs),
    /// Normalise binned curves over a common window and compare them.
    Compare(CompareArgs),
    /// Run the oracle suite.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled preset: single-well, single-well-L2, single-well-L50, double-well.
    #[arg(long)]
    pub preset: Option<String>,
    /// Directory for CSVs and the manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub source: Source,
    /// bohmian or stochastic.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Number of trajectories.
    #[arg(long)]
    pub n: Option<usize>,
    /// Time step, in the config's time unit (ms or 1/ω).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// first-arrival or all-crossings.
    #[arg(long)]
    pub detector_mode: Option<String>,
    /// Catch crossings that return within one step (stochastic only).
    #[arg(long)]
    pub bridge_correction: bool,
    /// Also simulate x and y and write three-dimensional snapshots.
    #[arg(long)]
    pub transverse: bool,
}

#[derive(Args, Debug)]
pub struct FpArgs {
    #[command(flatten)]
    pub source: Source,
    /// Fixed solver step in the config's time unit, replacing the adaptive
    /// choice. Steps beyond the drift stability limit fail the run.
    #[arg(long)]
    pub dt_pde: Option<f64>,
    /// Grid spacing in units of σ.
    #[arg(long)]
    pub dz: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Binned curves as `name=path` or plain paths; names are bohmian,
    /// stochastic_mc and stochastic_fp.
    #[arg(required = true)]
    pub inputs: Vec<String>,
    /// Config or preset providing the analytic current curves.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the results as JSON here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<pilotwave_core::Error> for Failure {
    fn from(e: pilotwave_core::Error) -> Self {
        Self {
            code: if e.is_config_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::runtime(format!("csv error: {e}"))
    }
}

fn configure_threads() -> Result<usize, Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|threads| match cli.command {
        Command::Trajectories(a) => commands::trajectories(a, threads),
        Command::FokkerPlanck(a) => commands::fokker_planck(a, threads),
        Command::Compare(a) => commands::compare(a, threads),
        Command::Validate(a) => commands::validate(a, threads),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
