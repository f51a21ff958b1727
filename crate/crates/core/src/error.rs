use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient class count: need {needed} bins labeled {label}, have {available}")]
    InsufficientClassCount {
        label: i8,
        needed: usize,
        available: usize,
    },

    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("non-finite value at row {line}, column {column}")]
    NonFiniteValue { line: usize, column: usize },

    #[error("no training node carries label {0}")]
    LabelPoolEmpty(i8),

    #[error("optimization problem has no pairs and no triplets")]
    EmptyProblem,

    #[error("scaling vector entry {0} is zero")]
    ZeroScale(usize),

    #[error("eigensolver did not converge after {0} iterations")]
    ConvergenceFailure(usize),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("both colour hypotheses infeasible for row {0}")]
    BothInfeasible(usize),

    #[error("problem dimension {k} exceeds reference solver cap {cap}")]
    ScaleTooLarge { k: usize, cap: usize },

    #[error("validation node {0} is not connected to any training node")]
    SingularSystem(usize),

    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
