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

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("undefined cosine: zero-norm vector")]
    UndefinedCosine,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("missing embedding for {} text(s): {}", .keys.len(), .keys.join(", "))]
    MissingEmbedding { keys: Vec<String> },

    #[error("transport error after {retries} retries: {message}")]
    Transport { retries: u32, message: String },

    #[error("pair {pair_id}: {source}")]
    Pair {
        pair_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("probe for language {lang}: {source}")]
    Probe {
        lang: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty training pool: every source language was excluded")]
    EmptyTrainingPool,

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Empty(_) => "empty_input",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::UndefinedCosine => "undefined_cosine",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::MissingEmbedding { .. } => "missing_embedding",
            Error::Transport { .. } => "transport",
            Error::Pair { source, .. } | Error::Probe { source, .. } => source.kind(),
            Error::EmptyTrainingPool => "empty_training_pool",
            Error::Config(_) => "config",
        }
    }
}
