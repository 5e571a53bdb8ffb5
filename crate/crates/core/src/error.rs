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

    #[error("invalid wav {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("manifest {path} line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("missing audio file {0}")]
    MissingAudio(PathBuf),

    #[error("requested split sizes need {requested} records but only {available} are available (short by {})", requested - available)]
    PartitionShortfall { requested: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown phoneme symbol `{0}`")]
    UnknownSymbol(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss in batch [{}]", batch_ids.join(", "))]
    NonFiniteLoss { batch_ids: Vec<String> },

    #[error("incompatible checkpoint: {}", mismatches.join("; "))]
    IncompatibleCheckpoint { mismatches: Vec<String> },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("system {system}: missing {component}")]
    MissingComponent { system: String, component: String },

    #[error("stage `{stage}` needs {missing}; run the stage that produces it first")]
    StageOrder { stage: String, missing: PathBuf },

    #[error("no ratings for system `{0}`")]
    NoRatings(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
