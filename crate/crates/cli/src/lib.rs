//! File formats and command implementations for the `liftsvd` binary.

pub mod commands;
pub mod config;
pub mod formats;

use liftsvd_core::certify::CertifyError;
use liftsvd_core::factor::FactorError;
use liftsvd_core::lift::LiftError;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CERTIFICATE_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BOUND_VIOLATION: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("declared norm bound violated at x = {witness:?} (S = {s})")]
    BoundViolation { witness: Vec<f64>, s: f64 },
    #[error("{0}")]
    Computation(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BoundViolation { .. } => EXIT_BOUND_VIOLATION,
            _ => EXIT_CONFIG,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<LiftError> for CliError {
    fn from(e: LiftError) -> Self {
        match e {
            LiftError::BoundViolation { witness, s } => CliError::BoundViolation { witness, s },
            LiftError::InvalidEta(_) | LiftError::Ordering(_) => CliError::Config(e.to_string()),
            other => CliError::Computation(other.to_string()),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Lift(inner) => inner.into(),
            other => CliError::Computation(other.to_string()),
        }
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::Lift(inner) => inner.into(),
            other => CliError::Computation(other.to_string()),
        }
    }
}
