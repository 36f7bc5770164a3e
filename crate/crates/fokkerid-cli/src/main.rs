//! Command-line pipeline: mesh caching, scenario simulation, reconstruction,
//! evaluation, and noise-ladder sweeps.
//!
//! Exit codes: 0 success (including stalled runs), 1 usage/configuration,
//! 2 io, 3 numerical failure.

mod pipeline;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "fokkerid",
    about = "Fokker-Planck magnetization dynamics: forward simulation and parameter identification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an icosphere mesh and cache it on disk (idempotent).
    Mesh {
        /// Refinement level (0..=7); the triangle count is 20·4^level.
        #[arg(long)]
        level: u32,
        /// Cache directory; defaults to $FOKKERID_CACHE_DIR or ./mesh-cache.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Write a built-in scenario file (cases 1, 2, 3).
    Preset {
        /// Case number: 1 field waveform, 2 anisotropy landscape, 3 easy axis.
        #[arg(long)]
        case: u8,
        /// Output scenario path (toml).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic measurements for a scenario (two-grid protocol).
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for y.csv, y_d*.csv, and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Also dump the fine-mesh state trajectory (large).
        #[arg(long)]
        dump_state: bool,
        /// Scenario overrides, e.g. --set scenario.fine_level=3 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Reconstruct a parameter from a measurement file.
    Reconstruct {
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for the run manifest, trace, and iterates.
        #[arg(long)]
        out: PathBuf,
        /// Noise level δ for the discrepancy principle; defaults to the value
        /// recorded in the simulation manifest next to the measurement.
        #[arg(long)]
        delta: Option<f64>,
        /// Use the recorded two-grid model mismatch as δ (noiseless runs).
        #[arg(long)]
        mismatch_delta: bool,
        /// Configuration overrides, e.g. --set landweber.k_max=200 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Aggregate error reports of finished runs into one table.
    Evaluate {
        /// Run directories (each containing a run manifest).
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Output table path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full noise-ladder sweep: simulate + reconstruct per level and seed.
    Ladder {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; defaults to the scenario seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn exit_code_for(err: &fokkerid::Error) -> u8 {
    use fokkerid::Error::*;
    match err {
        Config(_) | Shape(_) | Format(_) | Evaluation(_) => 1,
        Io(_) => 2,
        Solver { .. } | Numerical(_) | MeshQuality(_) | Interpolation(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors; anything else is a usage error
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Mesh { level, cache_dir } => pipeline::cmd_mesh(level, cache_dir),
        Command::Preset { case, out } => pipeline::cmd_preset(case, &out),
        Command::Simulate { scenario, out, dump_state, overrides } => {
            pipeline::cmd_simulate(&scenario, &out, dump_state, &overrides)
        }
        Command::Reconstruct { measurement, scenario, out, delta, mismatch_delta, overrides } => {
            pipeline::cmd_reconstruct(&measurement, &scenario, &out, delta, mismatch_delta, &overrides)
        }
        Command::Evaluate { runs, out } => pipeline::cmd_evaluate(&runs, out.as_deref()),
        Command::Ladder { scenario, out, seeds, overrides } => {
            pipeline::cmd_ladder(&scenario, &out, seeds.as_deref(), &overrides)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
