//! `semunc`: batch command-line front end.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(name = "semunc", version, about = "Ambiguity / instability decomposition of generation uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every question of a dataset and write one report line per question.
    Compute(ComputeArgs),
    /// Pick the smallest tau at which an all-ones baseline has near-zero entropy.
    Calibrate(CalibrateArgs),
    /// Assign regimes from median thresholds, with error-rate statistics when labels are given.
    Regimes(RegimesArgs),
    /// Failure-prediction AUROC with bootstrap intervals for every entropy score.
    Eval(EvalArgs),
    /// Write a planted-scenario dataset and its matching matrix file.
    Simulate(SimulateArgs),
    /// Iteratively rewrite an ambiguous question with an LLM endpoint.
    Disambiguate(DisambiguateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProviderKind {
    /// Token-overlap similarity, offline.
    Mock,
    /// Precomputed blocks from `--matrix`.
    Matrix,
    /// Chat-completion judge (CLUES_API_URL / CLUES_API_KEY, or `--replay`).
    Llm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Generic,
    SqlEquivalence,
    FactualAnswerEquivalence,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ResidualArg {
    Correlation,
    Raw,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum KindArg {
    Confident,
    Ambiguity,
    Instability,
    Compound,
    /// Cycle through the four kinds.
    Mixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum JudgeArg {
    /// Whitespace- and case-insensitive string equality.
    Exact,
    Llm,
}

/// Endpoint settings shared by commands that can talk to an LLM.
#[derive(Args, Clone, Debug)]
pub struct EndpointArgs {
    /// Model name sent with each request.
    #[arg(long, default_value = "judge")]
    pub model: String,
    /// Serve responses from a recorded exchange file instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Save every exchange to this file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
    /// Request JSON-schema structured output.
    #[arg(long)]
    pub structured_output: bool,
}

#[derive(Args)]
pub struct ComputeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderKind,
    /// Matrix file for `--provider matrix`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "generic")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "correlation")]
    pub residual: ResidualArg,
    /// Seed for the mock provider's perturbation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbation half-width for the mock provider.
    #[arg(long, default_value_t = 0.0)]
    pub mock_noise: f64,
    /// Questions processed concurrently.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Size of the all-ones baseline matrix.
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10,15,20")]
    pub grid: Vec<f64>,
    /// Entropy threshold in bits.
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value = "calibration.json")]
    pub out: PathBuf,
}

/// Where failure labels come from.
#[derive(Args, Clone, Debug)]
pub struct LabelArgs {
    /// Label file: `{question_id, failure}` per line.
    #[arg(long, conflicts_with = "dataset")]
    pub labels: Option<PathBuf>,
    /// Derive labels from the dataset's answers.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Correctness-fraction threshold for dataset-derived labels.
    #[arg(long, default_value_t = 0.8)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub judge: JudgeArg,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Args)]
pub struct RegimesArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    /// Use these cuts instead of fitting medians.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Where fitted thresholds are written (default: `<out>.thresholds.json`).
    #[arg(long)]
    pub thresholds_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap_b: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long = "n", default_value_t = 20)]
    pub n_questions: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub n_interpretations: usize,
    #[arg(long, default_value_t = 3)]
    pub answers_per_interpretation: usize,
    /// Dataset output; the matrix file defaults to `<stem>.matrix.jsonl` beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DisambiguateArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long, default_value_t = 3)]
    pub max_rounds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute(a) => commands::compute(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Regimes(a) => commands::regimes(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Disambiguate(a) => commands::disambiguate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e).expect("error serialises"));
    ExitCode::from(e.exit_code as u8)
}
