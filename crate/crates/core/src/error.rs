use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidIntegrator(String),

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    /// The implicit operator has a mode whose symbol is not positive.
    #[error("implicit operator symbol is not positive (min {min_symbol:e}); reduce the time step")]
    NonPositiveSymbol { min_symbol: f64 },

    #[error("non-finite value produced at step {step}; reduce the time step")]
    NonFinite { step: usize },

    #[error("fixed-point iteration did not reach {tol:e} in {iters} sweeps (last update {last_update:e})")]
    PicardDiverged { iters: usize, tol: f64, last_update: f64 },

    /// Converged backward Euler iterate does not decrease the modified energy.
    #[error("energy inequality violated by {excess:e}")]
    EnergyInequalityViolated { excess: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::UnknownPreset(_)
            | Error::InvalidGrid(_)
            | Error::InvalidParams(_)
            | Error::InvalidIntegrator(_) => 2,
            Error::NonPositiveSymbol { .. } => 3,
            Error::NonFinite { .. } => 4,
            Error::PicardDiverged { .. } => 5,
            Error::EnergyInequalityViolated { .. } => 6,
            Error::Io { .. } | Error::Format { .. } => 7,
            Error::LengthMismatch { .. } | Error::GridMismatch => 8,
        }
    }
}
