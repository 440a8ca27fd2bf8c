use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
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

    #[error("row {row}: self-loop {node} -> {node} is not allowed")]
    SelfLoop { row: usize, node: usize },

    #[error("row {row}: node id {id} out of range for {n_nodes} nodes")]
    NodeOutOfRange { row: usize, id: i64, n_nodes: usize },

    #[error(
        "row {row}, column `{column}`: missing value (impute covariates before fitting; \
         missing-data handling is not supported)"
    )]
    MissingValue { row: usize, column: String },

    #[error("expected {expected} covariate rows, found {found}")]
    RowCount { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("model specification: {0}")]
    Spec(String),

    #[error("network too large for exhaustive enumeration: {n_nodes} nodes (max {max})")]
    TooLarge { n_nodes: usize, max: usize },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("every start failed:\n{}", .0.join("\n"))]
    AllStartsFailed(Vec<String>),

    #[error("adjusted Rand index undefined: {0}")]
    Ari(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
