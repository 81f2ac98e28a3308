//! Pipeline driver: `fit`, `score`, `calib-stats`, `eval` and `calibrate`
//! over manifests, stats bundles and score files.
//!
//! Each command is a thin composition of `frodo_core` calls, so anything
//! the CLI writes can be reproduced through the library.

pub mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use frodo_core::{ErrorKind, FrodoError, DEFAULT_LAMBDA};

pub use commands::{cmd_calib_stats, cmd_calibrate, cmd_eval, cmd_fit, cmd_score};

/// Environment variable capping worker threads (0 = rayon default).
pub const THREADS_ENV: &str = "FRODO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "frodo", version, about = "Out-of-distribution detection from feature-activation statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-layer Gaussian statistics over the in-distribution rows.
    Fit(FitArgs),
    /// Score every manifest row against a stats bundle.
    Score(ScoreArgs),
    /// Median/MAD of in-distribution distances, for `--fusion sum_z`.
    CalibStats(CalibStatsArgs),
    /// ROC/AUC per method plus an operating point, written as a report.
    Eval(EvalArgs),
    /// Thresholds at a target OOD sensitivity.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "L1,L2,L3,L4,L5")]
    pub layers: String,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    /// `single:<layer>`, `sum_raw` or `sum_z`.
    #[arg(long, default_value = "single:L3")]
    pub fusion: String,
    /// Calibration JSON from `calib-stats`; required for `sum_z`.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Layers to score; defaults to every layer in the bundle.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibStatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    pub sensitivity: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub roc_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    pub sensitivity: f64,
    /// Existing report whose operating points are replaced.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), FrodoError> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args).map(drop),
        Command::Score(args) => cmd_score(&args).map(drop),
        Command::CalibStats(args) => cmd_calib_stats(&args).map(drop),
        Command::Eval(args) => cmd_eval(&args).map(drop),
        Command::Calibrate(args) => cmd_calibrate(&args).map(drop),
    }
}

/// 2 validation, 3 numerical failure, 4 I/O.
pub fn exit_code(err: &FrodoError) -> i32 {
    match err.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}
