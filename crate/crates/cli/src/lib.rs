//! Experiment harness: single solves, convergence sweeps, tolerance studies
//! and φ-kernel self-tests.
//!
//! Exit codes: 0 success, 1 solver failure, 2 usage or validation error.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod settings;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_convergence, cmd_phitest, cmd_solve, cmd_tolstudy};
pub use settings::{Mode, ProblemSource, RunSpec, Settings, StartMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dre",
    version,
    about = "Adaptive low-rank exponential integrators for Riccati equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one problem and write the step history as CSV.
    Solve(Settings),
    /// Fixed-step errors against the dense reference for a list of step counts.
    Convergence(Settings),
    /// Adaptive errors against the dense reference for a list of tolerances.
    Tolstudy(Settings),
    /// Compare factored φ-actions with the Kronecker oracle.
    Phitest(Settings),
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(s) => cmd_solve(&s.resolve()?.run_spec()?).map(drop),
        Command::Convergence(s) => cmd_convergence(&s.resolve()?).map(drop),
        Command::Tolstudy(s) => cmd_tolstudy(&s.resolve()?).map(drop),
        Command::Phitest(s) => cmd_phitest(&s.resolve()?).map(drop),
    }
}
