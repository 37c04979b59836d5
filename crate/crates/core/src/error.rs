use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),

    #[error("operation requires a step-{required} algebra, got step {got}")]
    WrongStep { required: usize, got: usize },

    #[error("grid operators support step <= 2, got step {0}")]
    UnsupportedStep(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("periodic grid is not compatible with the group lattice: {0}")]
    IncompatiblePeriodicGrid(String),

    #[error("time step {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("cut-off construction failed: {0}")]
    CutoffFailed(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("under-resolved grid: {0}")]
    UnderResolved(String),

    #[error("incompatible supports: {0}")]
    IncompatibleSupport(String),

    #[error("not enough usable records: need {need}, have {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
