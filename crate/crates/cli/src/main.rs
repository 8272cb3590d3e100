//! `legcal`: generate synthetic legged-robot logs, run the full-information
//! smoother, calibrate noise covariances and kinematic offsets, and verify
//! gradients ags finite differences.
//!
//! Exit codes: 0 success, 2 configuration/IO problem, 3 solver
//! non-convergence, 4 verification failure.

mod commands;
mod util;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "legcal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, visible_alias = "script")]
    config: Option<PathBuf>,
    /// Robot description (TOML). Built-in quadruped when omitted.
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for finite-difference probes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Increase stderr verbosity (also CALIB_LOG_LEVEL).
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic log (with ground truth) from a gait script.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// RNG seed; same seed, same bytes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the smoother on a log with fixed parameters.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Sensor log path.
        #[arg(long)]
        data: PathBuf,
        /// Parameter file (defaults to the config's initial values).
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Calibrate covariances and kinematic offsets on a log.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        /// Initial parameters (resume file); config init when omitted.
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Estimate on a held-out log with a calibrated parameter file.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: PathBuf,
    },
    /// Compare the analytic calibration gradient with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: Option<PathBuf>,
        /// Debug: corrupt one sensitivity column (negative control).
        #[arg(long)]
        corrupt_sensitivity: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate { common, seed } => commands::generate(&common, seed),
        Command::Estimate { common, data, theta } => {
            commands::estimate(&common, &data, theta.as_deref(), "estimate")
        }
        Command::Calibrate { common, data, theta } => {
            commands::calibrate(&common, &data, theta.as_deref())
        }
        Command::Evaluate { common, data, theta } => {
            commands::estimate(&common, &data, Some(&theta), "evaluate")
        }
        Command::Gradcheck { common, data, theta, corrupt_sensitivity } => {
            commands::gradcheck(&common, &data, theta.as_deref(), corrupt_sensitivity)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            util::exit_code_for(&err)
        }
    }
}
