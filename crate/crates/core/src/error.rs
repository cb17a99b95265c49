use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plan: {0}")]
    Plan(String),

    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid price grid: {0}")]
    InvalidGrid(String),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("training data contains a single outcome class")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("price {0} is not on the model's price grid")]
    OffGrid(f64),

    #[error("table teacher answers row-indexed queries only")]
    RowIndexRequired,

    #[error("row {row} is outside the table teacher's {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("probability {value} at row {row}, column {col} is outside [0, 1]")]
    Probability { row: usize, col: usize, value: f64 },

    #[error("empty sale history")]
    EmptyHistory,

    #[error("no sale recorded for store {0}")]
    UnknownStore(i64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown synthetic dataset id {0} (expected 1-6)")]
    UnknownSpec(u32),

    #[error("hypercube cell {cell} holds no probe rows")]
    EmptyCell { cell: usize },

    #[error("malformed model text at line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
