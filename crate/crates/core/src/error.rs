use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Column-role mapping does not match the input file.
    #[error("schema error: {0}")]
    Schema(String),

    /// Invalid option or combination of options.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates an expected property (empty sample, duplicate keys, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A model fit or estimator could not be computed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Dimensions of two inputs disagree.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("i/o error on {path}: {source}")]
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
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
