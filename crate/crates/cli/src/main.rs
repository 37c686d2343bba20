//! Command-line front end: data generation, fitting, prediction, evaluation,
//! replication experiments and the indicator-column resource study.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[global_allocator]
static ALLOC: fmesvm::bench::TrackingAllocator = fmesvm::bench::TrackingAllocator;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    std::io::Error,
    fmesvm::DataError,
    fmesvm::ModelError,
    fmesvm::MetricsError,
    fmesvm::models::ModelParseError,
    fmesvm::datagen::DatagenError,
    fmesvm::bench::BenchError,
    serde_json::Error
);

#[derive(Debug, Parser)]
#[command(name = "fmesvm", version, about = "Fair mixed-effects linear SVMs")]
struct Cli {
    /// Flat JSON object whose keys mirror the long flag names.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiments (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file, or directory for `experiment` and `profile`.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic clustered dataset.
    Generate(GenerateArgs),
    /// Fit one model and report its fairness metrics on the training data.
    Fit(FitArgs),
    /// Write decision values and labels for a dataset.
    Predict(PredictArgs),
    /// Score a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Repeated train/test replications over several estimators.
    Experiment(ExperimentArgs),
    /// Time and memory of random intercepts against indicator columns.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// unfair+RE, unfair-RE, fair+RE or fair-RE.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub eps_abs: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// SVM, SVMF, MESVM, FMESVM or ONEHOT.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Saved model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// unfair+RE, unfair-RE, fair+RE, fair-RE or adult.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Comma-separated model kinds.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Adult census file for the `adult` scenario.
    #[arg(long)]
    pub adult: Option<PathBuf>,
    /// Share of Adult rows used for training in each replication.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// `small` or `full` group grid and sample size.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated group counts.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Settings shared by every command.
#[derive(Debug)]
pub struct Common {
    pub config: config::Config,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => config::Config::load(path)?,
        None => config::Config::default(),
    };
    let common = Common { config, seed: cli.seed, jobs: cli.jobs, output: cli.output };
    match cli.command {
        Command::Generate(a) => commands::generate(&common, a),
        Command::Fit(a) => commands::fit(&common, a),
        Command::Predict(a) => commands::predict(&common, a),
        Command::Evaluate(a) => commands::evaluate(&common, a),
        Command::Experiment(a) => commands::experiment(&common, a),
        Command::Profile(a) => commands::profile(&common, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
