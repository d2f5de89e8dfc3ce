use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading, scoring, fusing or evaluating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("score {score} at line {line} outside declared range [{lo}, {hi}]")]
    Range { line: u64, score: f64, lo: f64, hi: f64 },

    #[error("duplicate comparison ({probe_id}, {reference_id}) at line {line}")]
    Duplicate {
        line: u64,
        probe_id: String,
        reference_id: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("inconsistent records: {0}")]
    Consistency(String),

    #[error("unknown id `{0}`")]
    Lookup(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("leakage: comparison ({probe_id}, {reference_id}) appears in both validation and test data")]
    Leakage { probe_id: String, reference_id: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),

    #[error("effect size undefined: {0}")]
    UndefinedEffect(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through any added context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
