//! `thp`: simulate multi-class data, fit node-wise regressions, test pairs,
//! estimate precision matrices and run replication studies.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "thp", version, about = "Joint testing and estimation of multiple graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a block-diagonal truth and a sample from it.
    Simulate(SimulateArgs),
    /// Fit every node-wise regression at one penalty level.
    Fit(FitArgs),
    /// Test node pairs for an edge in at least one class.
    Test(TestArgs),
    /// Threshold pair tests into precision-matrix estimates.
    Estimate(EstimateArgs),
    /// Choose the test level by validation likelihood.
    TuneAlpha(TuneArgs),
    /// Score estimates or test results against a known truth.
    Evaluate(EvaluateArgs),
    /// Run a simulation study and write mean/SE tables.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    #[value(name = "I", alias = "1")]
    I,
    #[value(name = "II", alias = "2")]
    II,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RemainderArg {
    Reject,
    Diagonal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Theory,
    Sim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResidualArg {
    Refit,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Chi,
    Linfun,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SidedArg {
    One,
    Two,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "I")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 48)]
    pub p: usize,
    /// Rows per class.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseArg,
    #[arg(long, value_enum, default_value = "reject")]
    pub remainder: RemainderArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write an independent validation sample.
    #[arg(long)]
    pub validation: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Class files, one per class, or a directory holding `class_0.csv`, `class_1.csv`, ...
#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    /// Center each column within its class before use.
    #[arg(long)]
    pub center: bool,
}

#[derive(Args, Debug)]
pub struct LambdaArgs {
    #[arg(long, value_enum, default_value = "sim")]
    pub lambda_rule: RuleArg,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Slack constant; `inf` drops the prefactor.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub xi: f64,
    /// Monte Carlo draws for the simulated rule.
    #[arg(long, default_value_t = 10_000)]
    pub sim_reps: usize,
    /// Use this penalty level instead of either rule.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "refit")]
    pub residuals: ResidualArg,
}

#[derive(Args, Debug)]
pub struct KindArgs {
    #[arg(long, value_enum, default_value = "chi")]
    pub kind: KindArg,
    /// Sign vector for `linfun`, e.g. `++-` or `1,1,-1`; defaults to all `+`.
    #[arg(long, allow_hyphen_values = true)]
    pub signs: Option<String>,
    #[arg(long, value_enum, default_value = "one")]
    pub sided: SidedArg,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// Seed for the simulated penalty rule.
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fits: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub kind: KindArgs,
    /// Test a single pair `a,b` instead of all pairs.
    #[arg(long)]
    pub pair: Option<String>,
    /// Also run support recovery and write `edges.json`.
    #[arg(long)]
    pub recover: bool,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fits: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub kind: KindArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fits: PathBuf,
    /// Validation class files or directory.
    #[arg(long, num_args = 1.., required = true)]
    pub validation: Vec<PathBuf>,
    #[command(flatten)]
    pub kind: KindArgs,
    /// Comma-separated levels; defaults to 10 log-spaced values in [1e-3, 0.5].
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Precision estimates to compare with the truth.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Test results CSV to score against the true edge set.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Test family that produced `--results` (sets the score orientation).
    #[command(flatten)]
    pub kind: KindArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplicateArgs {
    /// 1-2: testing studies (Model I, II); 3-4: estimation studies.
    #[arg(long)]
    pub table: usize,
    /// 1: k=5, p=48; 2: k=10, p=48; 3: k=10, p=200.
    #[arg(long, default_value_t = 1)]
    pub setting: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Rows per class; defaults to 100 (Model I) or 200 (Model II).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<thp_core::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Test(a) => commands::test(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::TuneAlpha(a) => commands::tune_alpha(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Replicate(a) => commands::replicate(&a),
    };
    match res {
        Ok(manifest) => {
            log::info!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
