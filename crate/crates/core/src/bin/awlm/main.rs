//! `awlm` command-line front end.

mod commands;
mod noise;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use awlm::AwlmError;

#[derive(Debug, Parser)]
#[command(
    name = "awlm",
    version,
    about = "Aspiration-weighted Luce choice: simulate, diagnose, identify, estimate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate choice counts for every regime of a design file.
    Simulate(SimulateArgs),
    /// Constructive identification of alpha and p0 from pairs of regimes.
    Identify(InputArgs),
    /// Minimum-distance, two-step GMM or least-squares estimation.
    Estimate(EstimateArgs),
    /// Axiom checks, rationalizability and design genericity; exit 3 on failure.
    Falsify(InputArgs),
    /// Axiom diagnostics with per-menu recovery; exit 3 on failure.
    Axioms(InputArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Dataset file (JSON), or CSV counts together with --design.
    #[arg(long)]
    pub input: PathBuf,
    /// Design file supplying menu and exposures for CSV input.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tolerance for exact checks. Defaults to 1e-9 for probabilities and a
    /// sampling-noise band for counts.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// One-step minimum distance with identity weight.
    Md,
    /// Two-step GMM with the optimal plug-in weight.
    Gmm2,
    /// Pooled least squares over regime pairs.
    Ls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianArg {
    Empirical,
    Model,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "gmm2")]
    pub kind: Kind,
    /// Source of P_i in the alpha column of G.
    #[arg(long, value_enum, default_value = "empirical")]
    pub jacobian: JacobianArg,
    /// Ridge scale for near-singular covariance blocks.
    #[arg(long, default_value_t = 1e-10)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Design file: universe, menu and per-regime exposure (and n).
    #[arg(long)]
    pub design: PathBuf,
    /// Influence strength in [0, 1).
    #[arg(long)]
    pub alpha: f64,
    /// Luce weights as a JSON object label -> weight, inline or a file path.
    /// Labels outside the feasible set may be omitted.
    #[arg(long)]
    pub weights: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample size for regimes whose design entry has no n.
    #[arg(long)]
    pub n: Option<u64>,
    /// Failure rule: persist, revert or retry:<r>.
    #[arg(long, default_value = "persist")]
    pub rule: String,
    /// Dataset destination; without it the dataset goes to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Report destination; defaults to stdout when --output is set.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const FALSIFIED: u8 = 3;
    pub const DEGENERATE: u8 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: exit::IO,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: exit::VALIDATION,
            message: message.into(),
        }
    }
}

impl From<AwlmError> for CliError {
    fn from(e: AwlmError) -> Self {
        let code = match e {
            AwlmError::Degenerate(_)
            | AwlmError::DegenerateSlice
            | AwlmError::UnderIdentified { .. }
            | AwlmError::Singular(_) => exit::DEGENERATE,
            AwlmError::NotRationalizable { .. }
            | AwlmError::RatioInconsistency { .. }
            | AwlmError::KappaNonpositive(_)
            | AwlmError::InconsistentFamily(_) => exit::FALSIFIED,
            _ => exit::VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("AWLM_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Identify(args) => commands::identify(&args),
        Command::Estimate(args) => commands::estimate(&args),
        Command::Falsify(args) => commands::falsify(&args),
        Command::Axioms(args) => commands::axioms(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("awlm: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
