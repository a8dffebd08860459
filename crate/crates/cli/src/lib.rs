//! `apafa` command line: simulate datasets, fit them, score fits against
//! their truth and run replicate studies.
//!
//! Exit codes: 0 success, 2 usage error (bad flags, files or data), 3 numeric
//! failure inside the sampler.

mod commands;
mod tables;

use std::ffi::OsString;
use std::path::PathBuf;

use apafa::ApafaError;
use clap::{Args, Parser, Subcommand};

pub use commands::{evaluate, fit, replicate, simulate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "apafa", version, about = "Multi-study factor analysis with covariate-gated specific factors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and its generating values.
    Simulate(SimulateArgs),
    /// Run the sampler on a data CSV.
    Fit(FitArgs),
    /// Score a fit against a truth file, or tabulate a study report.
    Evaluate(EvaluateArgs),
    /// Simulate, fit and score a grid of scenarios, shapes and seeds.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A, Astar, B, C or D.
    #[arg(long)]
    pub scenario: String,
    /// tall (60×10), large (45×60) or NxP.
    #[arg(long, default_value = "tall")]
    pub shape: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Threshold the outcomes at zero (probit data, unit noise).
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Chain settings shared by `fit` and `replicate`.
#[derive(Debug, Args, Clone, Default)]
pub struct ChainArgs {
    /// Flat `key = value` file with hyperparameter and chain settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data CSV: y1..yp, group, optional z1..zq.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outcomes are 0/1; fit through the probit link.
    #[arg(long)]
    pub binary: bool,
    /// Reject group labels missing from the header's `group:a|b|...` list.
    #[arg(long)]
    pub strict_labels: bool,
    /// Share of observed cells masked before fitting and scored afterwards.
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    /// Seed of the held-out cell choice (defaults to the chain seed).
    #[arg(long)]
    pub holdout_seed: Option<u64>,
    /// Posterior-mean gate above which a specific column is flagged as
    /// behaving like a shared one.
    #[arg(long, default_value_t = 0.9)]
    pub switching_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Draws archive written by `fit`.
    #[arg(long, requires = "truth")]
    pub draws: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Study report written by `replicate`; emits the factor-count table.
    #[arg(long, conflicts_with_all = ["draws", "truth"])]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Comma-separated scenarios.
    #[arg(long, default_value = "A,B,C,D", value_delimiter = ',')]
    pub scenarios: Vec<String>,
    /// Comma-separated shapes.
    #[arg(long, default_value = "tall", value_delimiter = ',')]
    pub shapes: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    /// Data seed of the first replicate; later ones count up from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Write the plan and stop without fitting.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a command, already classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<ApafaError> for CliError {
    fn from(e: ApafaError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Replicate(a) => replicate(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("apafa: {e}");
            e.exit_code()
        }
    }
}
