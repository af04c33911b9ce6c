//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors raised by estimation, modelling, simulation and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Not enough data for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A matrix factorization or fit failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The cadence estimate left the plausible range during a trial.
    #[error("estimator diverged at t = {time_s:.3} s (cadence {cadence_hz:.4} Hz); recent cadences: {recent:?}")]
    EstimatorDiverged {
        time_s: f64,
        cadence_hz: f64,
        recent: Vec<f64>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Whether the error stems from a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::EstimatorDiverged { .. })
    }
}
