use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of the model constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Parse(String),

    /// The harmonic matrix does not have full column rank.
    #[error("degenerate coding: smallest singular value {smallest:.3e} is below 1e-10 of the largest {largest:.3e}")]
    DegenerateCoding { smallest: f64, largest: f64 },

    #[error("near-singular whitener: eigenvalue {smallest:.3e} is below 1e-12 of the largest {largest:.3e}")]
    NearSingularWhitener { smallest: f64, largest: f64 },

    #[error("no noise subspace: {sources} sources but covariance dimension is {dim}")]
    NoNoiseSubspace { sources: usize, dim: usize },

    #[error("unidentifiable parameter: {0}")]
    Unidentifiable(String),

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from invalid input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse(_) | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
