use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EdfError>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{0}` is constant (zero variance)")]
    ConstantColumn(String),
    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("sensitive column `{0}` cannot be a deweighted feature; sensitive attributes are excluded from X")]
    SensitiveInProxySet(String),
    #[error("invalid outcome column `{column}`: {reason}")]
    InvalidOutcome { column: String, reason: String },
    #[error("unknown category `{label}` in column `{column}`")]
    UnknownCategory { column: String, label: String },
    #[error("holdout size {holdout} must be smaller than the number of rows {n}")]
    HoldoutTooLarge { holdout: usize, n: usize },
    #[error("degenerate sensitive column `{0}`: all values equal")]
    DegenerateSensitive(String),
    #[error("training data hash mismatch for {path}: expected {expected}, found {found}")]
    DataHashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("input vector is constant; correlation is undefined")]
    ConstantInput,
    #[error("at least {needed} values required, found {found}")]
    TooFewValues { needed: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("model does not provide class probabilities; binary outcomes need P(Y = 1 | X)")]
    NoProbabilityOutput,

    #[error("grid value {grid_value}, replication {replication}: {source}")]
    Replication {
        grid_value: String,
        replication: usize,
        #[source]
        source: Box<EdfError>,
    },
}

impl EdfError {
    pub fn class(&self) -> ErrorClass {
        use EdfError::*;
        match self {
            Json(_) | Config(_) => ErrorClass::Config,
            Io { .. }
            | Csv(_)
            | MissingColumn(_)
            | DuplicateColumn(_)
            | ConstantColumn(_)
            | MissingValue { .. }
            | NonFinite { .. }
            | SensitiveInProxySet(_)
            | InvalidOutcome { .. }
            | UnknownCategory { .. }
            | HoldoutTooLarge { .. }
            | DegenerateSensitive(_)
            | DataHashMismatch { .. } => ErrorClass::Data,
            DimensionMismatch { .. }
            | LengthMismatch { .. }
            | EmptyInput
            | ConstantInput
            | TooFewValues { .. }
            | InvalidParameter(_)
            | Singular(_)
            | NoProbabilityOutput => ErrorClass::Numerical,
            Replication { source, .. } => source.class(),
        }
    }
}
