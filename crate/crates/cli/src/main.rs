//! `dbsloc`: locate DBS electrode trajectories in CT volumes.
//!
//! Subcommands cover the full pipeline: phantom generation, registration,
//! ROI-masked segmentation, threshold calibration, validation against
//! ground truth, and mesh export. Every run writes its outputs plus a
//! `report.json`; wall-clock times live only in the report's
//! `timing_seconds` section, so all other bytes are reproducible.

mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dbsloc_core::Error;

#[derive(Parser)]
#[command(name = "dbsloc", version, about = "DBS electrode trajectory localization in CT")]
struct Cli {
    /// Worker thread cap; defaults to all cores. Results are identical
    /// for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment electrode trajectories from a CT volume.
    Segment(commands::segment::SegmentArgs),
    /// Align a moving volume to a fixed volume.
    Register(commands::register::RegisterArgs),
    /// Sweep the threshold multiplier k against ground truth.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Score recovered trajectories against ground truth.
    Validate(commands::validate::ValidateArgs),
    /// Generate a synthetic CT phantom with known trajectories.
    Phantom(commands::phantom::PhantomArgs),
    /// Render trajectories as a sphere-chain PLY mesh.
    ExportMesh(commands::export_mesh::ExportMeshArgs),
}

/// One stable exit code per error class so scripts can dispatch on `$?`.
/// Code 2 is reserved by the argument parser for usage errors.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 10,
        Error::Format { .. } => 11,
        Error::Corrupt { .. } => 12,
        Error::Unsupported { .. } => 13,
        Error::TooLarge { .. } => 14,
        Error::SingularTransform(_) => 15,
        Error::GridMismatch(_) => 16,
        Error::EmptyRoi(_) => 17,
        Error::InsufficientOverlap { .. } => 18,
        Error::TrajectoryNotFound(_) => 19,
        Error::GroundTruth(_) => 20,
        Error::InvalidParameter(_) => 21,
    }
}

fn run(command: Command) -> dbsloc_core::Result<()> {
    match command {
        Command::Segment(args) => commands::segment::run(args),
        Command::Register(args) => commands::register::run(args),
        Command::Calibrate(args) => commands::calibrate::run(args),
        Command::Validate(args) => commands::validate::run(args),
        Command::Phantom(args) => commands::phantom::run(args),
        Command::ExportMesh(args) => commands::export_mesh::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("dbsloc: invalid parameter: --threads must be at least 1");
            return ExitCode::from(21);
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("dbsloc: thread pool: {e}");
            return ExitCode::from(21);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dbsloc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
