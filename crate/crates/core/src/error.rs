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

    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("{path}:{line}: duplicate page ({doc_id}, {page_index})")]
    DuplicatePage {
        path: PathBuf,
        line: usize,
        doc_id: String,
        page_index: usize,
    },

    #[error("document {doc_id:?}: {message}")]
    InvalidDocument { doc_id: String, message: String },

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("requested rank {requested} exceeds limit {limit}")]
    RankTooLarge { requested: usize, limit: usize },

    #[error("matrix has numerical rank {rank}, below requested {requested}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite loss at example {index}")]
    NonFiniteLoss { index: usize },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("multilabel input not supported: {0}")]
    MultilabelUnsupported(&'static str),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
