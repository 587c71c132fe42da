//! `cedr`: Monte Carlo sweeps, study estimation and covariate diagnostics.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_ADVISORY: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "cedr", version, about = "Copula-corrected doubly robust treatment-effect estimation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CEDR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo sweep over sample sizes and endogeneity levels.
    Simulate(SimulateArgs),
    /// Estimate the ATE on a CSV study with bootstrap inference.
    Estimate(EstimateArgs),
    /// Normality and overlap diagnostics for a CSV study.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Naive,
    Cedr,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MisspecChoice {
    BothCorrect,
    PsWrong,
    OutcomeWrong,
    All,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Data-generating process: 1 (one endogenous covariate) or 2 (two).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub scenario: u8,
    /// Sample size; repeat for a sweep.
    #[arg(long = "n", default_values_t = [8000usize])]
    pub n: Vec<usize>,
    /// Endogeneity level; repeat for a sweep.
    #[arg(long = "rho", default_values_t = [0.0f64, 0.3, 0.5])]
    pub rho: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Both)]
    pub estimators: EstimatorChoice,
    /// Repeatable.
    #[arg(long, value_enum, default_values_t = [MisspecChoice::All])]
    pub misspec: Vec<MisspecChoice>,
    /// Also write every replicate estimate.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Study configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Both)]
    pub estimator: EstimatorChoice,
    /// Bootstrap replications; 0 skips inference. Defaults to the config value.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run CEDR even when every endogenous covariate looks normal.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    }
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Diagnose(a) => commands::diagnose(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
