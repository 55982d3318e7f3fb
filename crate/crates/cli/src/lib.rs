//! Scenario runner for the aggregation-diffusion predator-prey solvers:
//! configuration parsing, the built-in experiments, method orchestration,
//! diagnostics and figure-data export.

// `!(x > 0.0)` rejects NaN as well; keep the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod export;
pub mod runner;
pub mod scenario;

use std::fmt;

/// Errors mapped onto process exit codes: config errors (including empty
/// runs) exit 2, numerical failures 3, boundary contact 4, I/O problems 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// An export was requested for a run that produced no samples.
    EmptyRun,
    Numerical(String),
    BoundaryContact(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) | CliError::EmptyRun => 2,
            CliError::Numerical(_) => 3,
            CliError::BoundaryContact(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::EmptyRun => write!(f, "empty run: nothing to export"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::BoundaryContact(msg) => write!(f, "boundary contact: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<aggdiff_core::fv::FvError> for CliError {
    fn from(e: aggdiff_core::fv::FvError) -> Self {
        match e {
            aggdiff_core::fv::FvError::BoundaryContact { .. } => {
                CliError::BoundaryContact(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<aggdiff_core::particles::ParticleError> for CliError {
    fn from(e: aggdiff_core::particles::ParticleError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<aggdiff_core::density::DensityError> for CliError {
    fn from(e: aggdiff_core::density::DensityError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<aggdiff_core::kernels::KernelError> for CliError {
    fn from(e: aggdiff_core::kernels::KernelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
