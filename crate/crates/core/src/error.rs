use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

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

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unknown symptom column `{0}`")]
    UnknownColumn(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: token `{token}` is not 0/1/NA and not covered by a rule")]
    UncoveredToken { row: usize, column: String, token: String },

    #[error("row {row}: invalid age `{token}`")]
    InvalidAge { row: usize, token: String },

    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),

    #[error("duplicate symptom id `{0}`")]
    DuplicateSymptom(String),

    #[error("cohort has no symptomatic cases")]
    EmptyCohort,

    #[error("invalid stratification: {0}")]
    InvalidStrata(String),

    #[error("symptom `{0}` has no observed entries")]
    NoObservations(String),

    #[error("symptom `{0}` has no defined distance to any other symptom")]
    UndefinedRow(String),

    #[error("distance matrix has {0} undefined pairs")]
    UndefinedDistances(usize),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("NaN in natural parameters at ({row}, {col})")]
    NanParameter { row: usize, col: usize },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("case {0} has no observed entries")]
    EmptyRow(usize),

    #[error("bandwidth search failed for node {node}")]
    Bandwidth { node: usize },

    #[error("non-finite gradient at epoch {epoch}, edge {edge}")]
    NonFiniteGradient { epoch: usize, edge: usize },

    #[error("core symptom `{symptom}` missing from dataset `{dataset}`")]
    MissingCore { symptom: String, dataset: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
