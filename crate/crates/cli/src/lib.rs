//! Command-line driver for `locsparse-core`: TOML run configuration, matrix
//! files and the `locsparse` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod matrix_io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "locsparse", version, about = "Locally sparse reconstruction of dynamic image data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides `out` from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Write the kinetic dictionary.
    GenDict,
    /// Write the phantom coefficient matrix.
    GenPhantom,
    /// Write data `A U Bᵀ` plus noise.
    Forward,
    /// Reconstruct coefficients and write a convergence report.
    Solve {
        /// Re-solve on the recovered support without the l1 penalty.
        #[arg(long)]
        two_pass: bool,
    },
    /// Support error over the configured caps, as CSV.
    Sweep,
    /// Incoherence, scaling, source condition and predicted support, as JSON.
    Analyze,
}

impl Cli {
    pub fn resolve(&self) -> Result<(Command, RunConfig)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        let cmd = match self.command {
            Sub::GenDict => Command::GenDict,
            Sub::GenPhantom => Command::GenPhantom,
            Sub::Forward => Command::Forward,
            Sub::Solve { two_pass } => Command::Solve { two_pass },
            Sub::Sweep => Command::Sweep,
            Sub::Analyze => Command::Analyze,
        };
        Ok((cmd, cfg))
    }
}
