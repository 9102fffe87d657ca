use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("class index {index} out of range for {num_classes} classes")]
    ClassOutOfRange { index: usize, num_classes: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("true labels are required for this operation")]
    MissingTrueLabels,

    #[error("lambda {lambda} zeroes every entry of row {row}")]
    LambdaTooLarge { lambda: f64, row: usize },

    #[error("label marginal is not uniform (max deviation {deviation:.3e})")]
    NonUniformMarginal { deviation: f64 },

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
