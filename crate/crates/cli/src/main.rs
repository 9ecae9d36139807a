//! `concurve`: generate data, train additive models with a concurvity
//! penalty, sweep regularization strengths, benchmark the penalty and render
//! charts.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes: 1 for runtime errors, 2 for usage errors and missing inputs,
/// 3 when a sweep finished with some failed cells.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Partial(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<concurve::Error> for CliError {
    fn from(e: concurve::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "concurve", version, about = "Additive models with a concurvity regularizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Train one model on a CSV dataset.
    Train(TrainArgs),
    /// Train over a grid of regularization strengths and seeds.
    Sweep(SweepArgs),
    /// Time the R⊥ penalty against a NAM forward pass.
    Bench(BenchArgs),
    /// Render an SVG chart from CSV outputs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    Toy1,
    Toy2,
    Kovacs,
    Seasonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Smooth,
    Step,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub dataset: DatasetName,
    /// Rows (hours for the seasonal series).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature correlation for toy1: one of 0, 0.9, 1.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Allow any rho in [0, 1] for toy1.
    #[arg(long)]
    pub rho_free: bool,
    /// Seasonal pattern.
    #[arg(long, value_enum, default_value_t = ShapeArg::Step)]
    pub shape: ShapeArg,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Toy,
    Kovacs,
    Seasonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    None,
    Concurvity,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Binary,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be finite and >= 0, got {s}"))
    }
}

/// Options shared by `train` and `sweep` that pick the training config.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Built-in hyperparameter preset (default: toy).
    #[arg(long, value_enum, conflicts_with = "config")]
    pub preset: Option<PresetArg>,
    /// TOML training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Penalty kind; defaults to concurvity when --lambda > 0.
    #[arg(long, value_enum)]
    pub reg: Option<RegArg>,
    /// Target column.
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    /// Override the number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Penalty strength.
    #[arg(long, value_parser = non_negative)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// TOML sweep spec; replaces the grid options below.
    #[arg(long, conflicts_with_all = ["preset", "config", "lambdas", "seeds"])]
    pub spec: Option<PathBuf>,
    /// Grid size: 0 plus log-spaced strengths over [1e-4, 10].
    #[arg(long, default_value_t = concurve::sweep::DEFAULT_LAMBDA_COUNT)]
    pub lambdas: usize,
    /// Seeds 1..=N.
    #[arg(long, default_value_t = concurve::sweep::DEFAULT_SEED_COUNT)]
    pub seeds: usize,
    /// Write per-cell wall-clock time into records.csv (breaks byte-identical reruns).
    #[arg(long)]
    pub timing: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("not a count: {p}")))
        .collect()
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated feature counts.
    #[arg(long, value_parser = parse_list, default_value = "8,64,256")]
    pub features: Vec<Vec<usize>>,
    /// Comma-separated batch sizes.
    #[arg(long, value_parser = parse_list, default_value = "128,512")]
    pub batches: Vec<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Repetitions of the NAM-forward baseline; 0 skips it.
    #[arg(long, default_value_t = 5)]
    pub baseline_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChartKind {
    /// Fit vs R⊥ from a sweep's records.csv.
    Tradeoff,
    /// Fit and R⊥ vs λ from a sweep's records.csv.
    Verbose,
    /// Shape functions from one or more shapes.csv files.
    Shapes,
    /// Box/strip plot from one or more importance.csv files.
    Importance,
    /// Heatmap of a correlation-matrix CSV.
    Corr,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub kind: ChartKind,
    /// Input CSVs; files of the same kind are concatenated.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Data CSV for the rug strip under shape plots.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fit metric label for trade-off charts.
    #[arg(long, default_value = "rmse")]
    pub metric: String,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
