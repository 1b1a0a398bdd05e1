use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sentence is empty after tokenization")]
    EmptySentence,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("alignment error: {hyps} hypotheses vs {refs} references")]
    Alignment { hyps: usize, refs: usize },

    #[error("hypothesis {index} is empty")]
    EmptyHypothesis { index: usize },

    #[error("transfer batch is empty")]
    EmptyBatch,

    #[error("corpus contains a single style label; both labels are required")]
    DegenerateCorpus,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in tensor")]
    NonFinite,

    #[error("cosine similarity of a zero vector")]
    ZeroVector,

    #[error("training diverged at epoch {epoch}: {parts}")]
    Divergence { epoch: usize, parts: String },

    #[error("no correct-style candidates available")]
    NoCandidates,

    #[error("insufficient runs: {got} (at least 2 required)")]
    InsufficientRuns { got: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
