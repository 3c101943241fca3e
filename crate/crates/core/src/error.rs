use thiserror::Error;

/// Errors raised by the imputation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site area must be positive, got {0}")]
    DegenerateArea(f64),
    #[error("constant feature `{0}`: variance is zero")]
    ConstantFeature(&'static str),
    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("need at least {required} blocks with observed FSI and GSI, got {got}")]
    TooFewObserved { required: usize, got: usize },
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cluster count mismatch: probabilities have {proba}, model has {model}")]
    KMismatch { proba: usize, model: usize },
    #[error("spatial index is empty")]
    EmptyIndex,
    #[error("rank {rank} must be below min(rows, cols) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },
    #[error("negative input value {value} at row {row}, column {col}")]
    NonNegativeViolation { row: usize, col: usize, value: f64 },
    #[error("prediction key sets differ: `{0}` present on one side only")]
    KeyMismatch(String),
    #[error("missing rate {rate} leaves no observed blocks out of {n}")]
    RateTooHigh { rate: f64, n: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("zero variance in reference values")]
    ZeroVariance,
    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },
    #[error("schema error: missing column(s) {0:?}")]
    Schema(Vec<String>),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
