use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can surface.
///
/// Variants are grouped by the CLI exit code they map to; see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("unknown item id `{0}`")]
    MissingItem(String),

    #[error("user history is empty")]
    EmptyHistory,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("candidate pool is missing {} test positives (first: {})", .0.len(), .0.first().map(String::as_str).unwrap_or("-"))]
    Coverage(Vec<String>),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("incompatible artifacts: {0}")]
    Compatibility(String),

    #[error("integrity error at byte offset {offset}: {reason}")]
    Integrity { offset: u64, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("index out of range: {index} >= {len} in {what}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("degenerate vector (norm {norm:e}) cannot be normalized")]
    DegenerateVector { norm: f64 },

    #[error("non-finite value in `{block}`")]
    NonFinite { block: String },

    #[error("training diverged at epoch {epoch}, step {step}; last finite state: {}", checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "not saved".into()))]
    Divergence {
        epoch: usize,
        step: usize,
        checkpoint: Option<PathBuf>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn integrity(offset: u64, reason: impl Into<String>) -> Self {
        Error::Integrity {
            offset,
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parameter { .. } => 2,
            Error::DegenerateVector { .. } | Error::NonFinite { .. } | Error::Divergence { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
