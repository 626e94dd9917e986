mod analyze;
mod manifest;
mod plot;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Exit status for bad input: unreadable files, invalid flags or configs.
const EXIT_VALIDATION: u8 = 2;
/// Exit status when estimation itself fails on valid input.
const EXIT_ESTIMATION: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn estimation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ESTIMATION,
            message: message.into(),
        }
    }
}

impl From<gates_core::Error> for CliError {
    fn from(err: gates_core::Error) -> Self {
        use gates_core::Error as E;
        match err {
            E::DegenerateFolds { .. } | E::ArmTooSmall { .. } | E::Learner(_) | E::TooManyFailures { .. } => {
                CliError::estimation(err.to_string())
            }
            _ => CliError::validation(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "gates",
    version,
    about = "Sorted group average treatment effects with cross-fitted randomization inference and split-sample robust inference"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Method {
    Ri,
    Ssri,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LevelArg {
    Halved,
    Nominal,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate GATES on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo comparison from a TOML config.
    #[command(after_help = simulate::CONFIG_HELP)]
    Simulate(SimulateArgs),
    /// Render coverage/length plots and a comparison table from simulation reports.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct AnalyzeArgs {
    /// Input CSV with a header row.
    pub csv: PathBuf,
    #[arg(long, value_enum, default_value = "ri")]
    pub method: Method,
    /// Number of sorted groups.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Cross-fitting folds (ri).
    #[arg(long, default_value_t = 3)]
    pub l: usize,
    /// Repeated splits (ssri).
    #[arg(long, default_value_t = 250)]
    pub splits: usize,
    /// Fraction of units in the main (evaluation) sample (ssri).
    #[arg(long, default_value_t = 0.33)]
    pub main_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Subtract a control-arm LASSO prediction from the outcome (ssri).
    #[arg(long)]
    pub baseline: bool,
    /// Level of the per-split intervals (ssri).
    #[arg(long, value_enum, default_value = "halved")]
    pub level_adjust: LevelArg,
    /// Folds for cross-validating the LASSO penalty.
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, default_value = "d")]
    pub treatment: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for result.json, table.txt and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct SimulateArgs {
    /// TOML config file.
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// One or more report.json files written by `simulate`.
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| CliError::validation(format!("cannot configure thread pool: {e}")))?;
    }
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Analyze(args) => analyze::run(&args, &argv),
        Command::Simulate(args) => simulate::run(&args, &argv),
        Command::Report(args) => report::run(&args, &argv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
