//! `thp`: loss budget, attack factors, frame simulation, grid search and
//! afterpulse histogram analysis for a long-wavelength Trojan-horse attack.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes shared by all subcommands.
pub mod exit {
    pub const BREACH: u8 = 0;
    pub const NO_BREACH: u8 = 2;
    pub const ABORT: u8 = 3;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 64;
}

#[derive(Parser, Debug)]
#[command(
    name = "thp",
    version,
    about = "Long-wavelength Trojan-horse attack simulator for gated-detector QKD receivers",
    after_help = "Exit codes:\n  0   success (simulate: breach)\n  1   runtime or configuration error\n  2   simulate: no breach\n  3   simulate: QBER at or above the abort threshold\n  64  usage error"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed of the random streams.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Frames per simulation.
    #[arg(long, global = true, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Output directory (default: thp-runs/<command>-<timestamp>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Rescale histograms so the peak maps to 1 and the dark level to 0.
    #[arg(long, global = true)]
    pub normalize_display: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Path losses at both wavelengths and the attenuation ratio rho.
    Budget,
    /// theta, nu, gamma and the per-detector afterpulse reductions.
    Factors,
    /// Simulate the configured attack (or a frame plan) and test for a breach.
    Simulate {
        /// JSON frame plan to run instead of the configured combination.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Override `detectors.afterpulse_scaling`.
        #[arg(long, value_enum)]
        scaling: Option<ScalingArg>,
    },
    /// Search the configured grid for breaching combinations.
    Optimize {
        /// Evaluate at most this many combinations.
        #[arg(long)]
        budget: Option<usize>,
        /// Rows to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, value_enum)]
        scaling: Option<ScalingArg>,
    },
    /// Correct, split and fit an afterpulse histogram (CSV: bin_start_s,counts).
    Histogram {
        input: PathBuf,
        /// THP injections behind the record; enables the first-click correction.
        #[arg(long)]
        trials: Option<f64>,
        /// First bin of the dark-count tail (default: second half).
        #[arg(long)]
        tail_start: Option<usize>,
        /// First bin included in the decay fit.
        #[arg(long, default_value_t = 0)]
        fit_from: usize,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingArg {
    Derived,
    Signal,
    AsConfigured,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::FAILURE)
        }
    }
}
