//! Batch runner behind the `dressed-gate` binary.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dressed_gate::sequence::Variant;

pub use commands::{run, Outcome};
pub use config::{Command, Mode, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dressed-gate", version, about = "Dressed-state two-ion phase gate experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<CliCommand>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Calibrate the sideband amplitude and carrier phase.
    Calibrate,
    /// Populations versus interrogation time.
    Evolve,
    /// Parity scan and Bell-fidelity estimate.
    Parity,
    /// Error budget, one source at a time.
    Budget,
    /// Noise-free fast-term error versus Ω_C/δ.
    Fastscan,
}

impl From<&CliCommand> for Command {
    fn from(c: &CliCommand) -> Self {
        match c {
            CliCommand::Calibrate => Command::Calibrate,
            CliCommand::Evolve => Command::Evolve,
            CliCommand::Parity => Command::Parity,
            CliCommand::Budget => Command::Budget,
            CliCommand::Fastscan => Command::Fastscan,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Readout shots per point (sampled mode).
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Expectation values from the density matrix.
    #[arg(long, global = true, conflicts_with = "sampled")]
    pub exact: bool,
    /// Shot-sampled readout through the mixture fit.
    #[arg(long, global = true)]
    pub sampled: bool,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            variant: self.variant,
            shots: self.shots,
            mode: match (self.exact, self.sampled) {
                (true, _) => Some(Mode::Exact),
                (_, true) => Some(Mode::Sampled),
                _ => None,
            },
            workers: self.workers,
        }
    }
}

/// Loads, overrides, resolves and runs. Shared by the binary and the tests.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.common.overrides());
    let command = match (&cli.command, cfg.experiment) {
        (Some(c), _) => Command::from(c),
        (None, Some(c)) => c,
        (None, None) => {
            return Err(CliError::config(
                "experiment",
                "no subcommand given and none set in the config",
            ))
        }
    };
    let cfg = cfg.resolve(command)?;
    run(command, &cfg)
}
