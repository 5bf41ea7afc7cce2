use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {left_rows}x{left_cols}, right {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("{op} requires a scalar (1x1) value, got {rows}x{cols}")]
    NotScalar {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("log of non-positive value {value} at index {index}")]
    LogDomain { value: f64, index: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("dropout policy mismatch: {0}")]
    PolicyMismatch(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("csv parse error at row {row}: {message}")]
    CsvRow { row: usize, message: String },

    #[error("non-numeric feature in column '{column}' at row {row}")]
    NonNumericColumn { column: String, row: usize },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
