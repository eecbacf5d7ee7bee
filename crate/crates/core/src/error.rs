use thiserror::Error;

/// Errors produced by loading, validating and evaluating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("invalid value {value} at sample {row}, column {column}: {reason}")]
    InvalidValue { row: usize, column: usize, value: f64, reason: &'static str },

    #[error("factor {factor}: label {label} exceeds declared cardinality {cardinality}")]
    LabelOutOfRange { factor: usize, label: usize, cardinality: usize },

    #[error("degenerate quantization grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange { what: &'static str, index: usize, limit: usize },

    #[error("pairwise quantity requested for identical latents ({0}, {0})")]
    SameLatent(usize),

    #[error("conditioning on the remaining latents requires at least two latents")]
    SingleLatent,

    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("all latents are uninformative (total informativeness {0:e})")]
    AllLatentsUninformative(f64),

    #[error("no factors to aggregate")]
    EmptyFactors,

    #[error("modularity is undefined for a single factor")]
    SingleFactor,

    #[error("enumeration of {states} states exceeds the cap of {cap}")]
    TooLarge { states: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by the evaluation settings rather than by the input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGrid(_) | Error::InvalidConfig(_) | Error::KOutOfRange { .. } | Error::TooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
