use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum RamError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("target column `{0}` not found")]
    TargetNotFound(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("unparseable cell `{value}` in column `{column}` (data row {row})")]
    UnparseableCell {
        column: String,
        row: usize,
        value: String,
    },

    #[error("file has no data rows")]
    EmptyFile,

    #[error("target column `{0}` is constant")]
    ConstantTarget(String),

    #[error("numeric column `{0}` is constant")]
    ConstantColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("arity mismatch: expected {expected} columns, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite residuals in boosting round {round}")]
    NonFiniteResiduals { round: usize },

    #[error("region mask is empty")]
    EmptyMask,

    #[error("regions of feature {feature} are not a partition: row {row} matches {matches} regions")]
    NotAPartition {
        feature: usize,
        row: usize,
        matches: usize,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<RamError>,
    },
}

pub type Result<T> = std::result::Result<T, RamError>;

impl RamError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RamError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a pipeline stage label to an error.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| RamError::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
