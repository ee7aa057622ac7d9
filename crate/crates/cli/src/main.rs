#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod experiment;
mod grid;
mod report;
mod verify;

/// Exit status plus the message printed on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<logitgates::Error> for Failure {
    fn from(e: logitgates::Error) -> Self {
        use logitgates::Error as E;
        let code = match e {
            E::Config(_)
            | E::ParseSpec { .. }
            | E::Chain { .. }
            | E::InvalidActivation(_)
            | E::Json(_) => 2,
            E::NonFinite { .. } => 3,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(1, e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

pub const SEED_ENV: &str = "LOGITGATES_SEED";

/// `LOGITGATES_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => {
            s.trim().parse().map(Some).map_err(|_| {
                Failure::new(2, format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

#[derive(Parser)]
#[command(
    name = "logitgates",
    version,
    about = "Logit-space Boolean activations: experiments and numerical checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export an exact-vs-approximate comparison grid as CSV (and optionally PGM).
    Grid(GridArgs),
    /// Check normalization constants, gradients, the approximation bound, and probability identities.
    Verify(VerifyArgs),
    /// Train a network from a JSON experiment config.
    Train(TrainArgs),
    /// Summarize the training reports found under a directory as a markdown table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GridKind {
    And,
    Or,
    Xnor,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridFamily {
    Il,
    Ail,
    Both,
}

#[derive(Args)]
pub struct GridArgs {
    #[arg(long, value_enum)]
    pub kind: GridKind,
    /// Which surface the heatmap shows; `both` shows their difference.
    #[arg(long, value_enum, default_value = "both")]
    pub family: GridFamily,
    /// Half-width of the square domain.
    #[arg(long, default_value_t = 10.0)]
    pub range: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// Width of the band around axes and diagonals left out of the off-boundary maximum.
    #[arg(long, default_value_t = 0.02)]
    pub band: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an 8-bit grayscale heatmap; defaults to the CSV path with a .pgm extension.
    #[arg(long, num_args = 0..=1)]
    pub pgm: Option<Option<PathBuf>>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Monte Carlo normalization constants against the reference table.
    #[arg(long)]
    pub constants: bool,
    /// Analytical vs finite-difference gradients of every activation.
    #[arg(long)]
    pub gradients: bool,
    /// Maximum AIL-IL difference away from the axes and diagonals.
    #[arg(long)]
    pub diff_bound: bool,
    /// Probability-space identities of the exact operators.
    #[arg(long)]
    pub bayes: bool,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 10_000_000)]
    pub n: u64,
    /// Falls back to LOGITGATES_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON list of `{"name", "mean", "std"}` rows replacing the built-in reference table.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Experiment config (JSON).
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Grid(a) => grid::run(&a),
        Command::Verify(a) => verify::run(&a),
        Command::Train(a) => experiment::run(&a),
        Command::Report(a) => report::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
