//! Configuration-driven front end: coefficient ingestion, correctors,
//! `𝒜`-harmonic construction, scaling studies and invariant verification.

pub mod commands;
pub mod config;
pub mod suite;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const PROPERTY: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const SOLVER: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(homog_uc::Error),
    #[error("cannot write {file}: {source}")]
    Output {
        file: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(_) | CliError::Output { .. } => exit::SOLVER,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "homog-uc", version, about = "Periodic homogenization correctors and large-scale unique continuation studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the cell problems and write the corrector table.
    Correctors {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the three-ellipsoid / doubling study (and the probe, if configured).
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Skip the higher-order correction of the seeds.
        #[arg(long)]
        negative_control: bool,
    },
    /// Run the invariant suite and emit a pass/fail report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Inject known defects; every defect check must then fail.
        #[arg(long)]
        negative_control: bool,
    },
}

/// Caps rayon's global pool from `HOMOG_UC_THREADS`.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("HOMOG_UC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("HOMOG_UC_THREADS = {v:?} is not a positive integer")))?;
        // A pool may already exist when embedded in tests; that is not an error.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one command, writing human-readable progress to `out`; returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> u8 {
    let res = init_threads().and_then(|()| match &cli.command {
        Command::Correctors { config } => {
            RunConfig::load(config).and_then(|c| commands::cmd_correctors(&c, out))
        }
        Command::Study {
            config,
            negative_control,
        } => RunConfig::load(config).and_then(|c| commands::cmd_study(&c, *negative_control, out)),
        Command::Verify {
            config,
            negative_control,
        } => RunConfig::load(config).and_then(|c| commands::cmd_verify(&c, *negative_control, out)),
    });
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("homog-uc: {e}");
            e.exit_code()
        }
    }
}
