use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error in document `{doc}`: {msg}")]
    Validation { doc: String, msg: String },

    #[error("inconsistent annotation in document `{doc}` at pair ({a}, {b}): {msg}")]
    Inconsistent {
        doc: String,
        a: u32,
        b: u32,
        msg: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("missing embedding for document `{doc}` event {event}")]
    MissingEmbedding { doc: String, event: u32 },

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Precondition(_) => 2,
            Error::Parse { .. } | Error::Json(_) => 3,
            Error::Validation { .. } => 4,
            Error::Inconsistent { .. } => 5,
            Error::Dimension { .. } | Error::Training(_) => 6,
            Error::MissingEmbedding { .. } | Error::EmbeddingFormat(_) => 7,
            Error::Eval(_) => 8,
            Error::Io(_) => 9,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
