use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ring specification: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("matrix exponential failed: {0}")]
    MatrixExponential(String),

    #[error("sampler acceptance rate {rate:.3e} below floor {floor:.3e} after {candidates} candidates")]
    AcceptanceTooLow {
        rate: f64,
        floor: f64,
        candidates: u64,
    },

    #[error("sequence exhausted: {0}")]
    SequenceExhausted(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("insufficient population: requested {requested}, available {available}")]
    InsufficientPopulation { requested: usize, available: usize },

    #[error("missing dephasing pool for the dephasing-averaged objective")]
    MissingPool,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
