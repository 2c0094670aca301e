use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error(
        "singular local fit at query {query} (row {row}, range {range}) with bandwidth {bandwidth}"
    )]
    SingularFit {
        query: usize,
        row: usize,
        range: usize,
        bandwidth: f64,
    },

    #[error("singular local fit at query {query}: weighted design is rank deficient")]
    SingularLocalFit { query: usize },

    #[error("bandwidth selection failed: every candidate in [{lo}, {hi}] gave a singular fit")]
    BandwidthSelection { lo: f64, hi: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("schema mismatch in {file}: {message}")]
    Schema { file: PathBuf, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::SingularFit { .. } => "singular_fit",
            Error::SingularLocalFit { .. } => "singular_local_fit",
            Error::BandwidthSelection { .. } => "bandwidth_selection",
            Error::Data(_) => "data",
            Error::Schema { .. } => "schema",
            Error::EmptyInput(_) => "empty_input",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
