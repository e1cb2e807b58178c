use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid visit {visit_id}: {reason}")]
    InvalidVisit { visit_id: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("modality mismatch: predictor expects {expected}, got {got}")]
    ModalityMismatch { expected: String, got: String },

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}; allowed variables: {allowed}")]
    UnknownIdentifier {
        name: String,
        position: usize,
        allowed: String,
    },

    #[error("formula `{formula}` needs variable `{variable}` which is not available")]
    MissingVariable { formula: String, variable: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unknown subgroup criterion `{0}`")]
    UnknownCriterion(String),

    #[error("missing {what} estimate for visit {visit_id}")]
    MissingEstimate { what: String, visit_id: String },

    #[error("weights file: {0}")]
    Weights(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
