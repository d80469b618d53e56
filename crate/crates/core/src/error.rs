use thiserror::Error;

/// Errors raised by the knowledge-graph, ingestion and model layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("vocabulary is frozen; cannot add {0}")]
    Frozen(String),

    #[error("parse error in document {doc}: field `{field}`: {message}")]
    DocumentParse {
        doc: usize,
        field: String,
        message: String,
    },

    #[error("parse error at line {line}: {message}")]
    LineParse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
