//! `sgot`: estimate spectral measures from trajectories, compare systems,
//! run shift scenarios, classify, interpolate and forecast.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgot::error::SgotError;

#[derive(Debug, Parser)]
#[command(name = "sgot", version, about = "Spectral-Grassmann optimal transport between dynamical systems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// sgot, sot, got, hs, op or martin.
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Eigenvalue weight of the spectral-Grassmann cost, in (0, 1).
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Transport exponent.
    #[arg(long, global = true)]
    pub p: Option<u32>,
    /// Estimator rank.
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    /// Tikhonov regularization of the estimator.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Context window length in samples.
    #[arg(long, global = true)]
    pub context: Option<usize>,
    /// linear, rbf (median lengthscale) or rbf:<lengthscale>.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Wall-clock limit in seconds; exceeding it exits with code 4.
    #[arg(long, global = true)]
    pub time_budget: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one spectral measure JSON per trajectory CSV.
    Estimate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Pairwise distance matrix between spectral measure JSON files.
    Distmat {
        #[arg(required = true)]
        measures: Vec<PathBuf>,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "distances.csv")]
        output: String,
    },
    /// Shift scenarios: all six similarities against the base system.
    Scenario {
        /// a, b, c, d, a comma list, or all.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Nested cross-validated k-nearest-neighbour classification.
    Classify {
        /// CSV manifest of (path, label) rows.
        manifest: Option<PathBuf>,
        /// Use the built-in two-class oscillators with this many per class.
        #[arg(long, conflicts_with = "manifest")]
        synthetic: Option<usize>,
    },
    /// Barycentric interpolation between two systems.
    Interpolate {
        source: Option<PathBuf>,
        target: Option<PathBuf>,
        /// Use the built-in pair of two-oscillator systems.
        #[arg(long, conflicts_with_all = ["source", "target"])]
        synthetic: bool,
        /// Comma-separated interpolation ratios in [0, 1].
        #[arg(long)]
        gammas: Option<String>,
    },
    /// Forecast from an initial window through the modal form.
    Forecast {
        /// Trajectory CSV whose last context window starts the forecast.
        init: PathBuf,
        /// Spectral measure JSON; estimated from `init` when omitted.
        #[arg(long)]
        measure: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
    },
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let err = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("UsageError", e.to_string().trim(), 2),
    };
    match commands::run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.to_string(), exit_code(&e)),
    }
}

fn exit_code(e: &SgotError) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
