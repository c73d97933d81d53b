use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {0:e} is too small to normalize")]
    ZeroVector(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension k = {0} is not supported (need k >= 2)")]
    UnsupportedDimension(usize),

    #[error("observation is collinear with the location; its sign is undefined")]
    DegenerateSign,

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("angular function is not strictly increasing on [-1, 1] ({0})")]
    NotMonotone(String),

    #[error("quadrature failed to converge: {0}")]
    NonIntegrable(String),

    #[error("transformation is not a valid group element: {0}")]
    InvalidGroupElement(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("rank-based central sequence vanishes (norm {0:e})")]
    DegenerateCentralSequence(f64),

    #[error("h(beta) stays positive on (0, {beta_max:e}]")]
    NoSignChange { beta_max: f64 },

    #[error("cross-information between score and truth is zero")]
    ZeroCrossInfo,

    #[error("asymptotic variance factors refer to different truths ({0} vs {1})")]
    MixedTruth(String, String),

    #[error("{failed} of {replicates} replicates failed (last error: {last})")]
    TooManyFailures {
        failed: usize,
        replicates: usize,
        last: String,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: row norm {norm} deviates from 1 by more than 1e-3")]
    Norm { line: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
