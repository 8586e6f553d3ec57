use thiserror::Error;

/// Errors raised by the channel model, the oracle and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coincident point: {0}")]
    CoincidentPoint(String),

    #[error("grazing geometry: {0}")]
    GrazingGeometry(String),

    #[error("no reflection path: {0}")]
    NoReflectionPath(String),

    #[error("quadrature resolution: grid step {grid_step:.3e} m exceeds {limit:.3e} m")]
    QuadratureResolution { grid_step: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("correlation model inconsistent: minimum eigenvalue {min_eigenvalue:.3e}")]
    CorrelationInconsistent { min_eigenvalue: f64 },

    #[error("path unavailable: {0}")]
    PathUnavailable(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
