use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty query set")]
    EmptyQuerySet,

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("unknown classifier index {0}")]
    UnknownClassifier(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("separation audit needs at least two classes, found {0}")]
    SingleClass(usize),

    #[error("sample size {requested} exceeds pool size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("no stored outputs for classifier {0}")]
    MissingOutputs(usize),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid probability row {row}: {reason}")]
    InvalidProbability { row: usize, reason: String },

    #[error("infeasible: minimum feasible budget = N*min_i b_i = {min_budget}, budget = {budget}")]
    Infeasible { min_budget: f64, budget: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance too large for exhaustive enumeration: {0} assignments")]
    InstanceTooLarge(f64),

    #[error("dp table of {cells} cells is too large; use branch-and-bound mode")]
    TableTooLarge { cells: f64 },

    #[error("could not place {classes} centers at separation {separation} in dimension {dim}; try a smaller separation or a larger dimension")]
    PackingInfeasible {
        classes: usize,
        dim: usize,
        separation: f64,
    },

    #[error("point lies outside every class region")]
    OffManifold,

    #[error("classifier '{name}': outputs file {path} not found")]
    MissingClassifierFile { name: String, path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
