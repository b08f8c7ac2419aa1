use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("numerical consistency: {0}")]
    Numerical(String),

    #[error("window construction failed: {0}")]
    Construction(String),

    #[error("solver diverged at iteration {iteration}: objective {objective:.6e} exceeds 10x initial {initial:.6e}")]
    Divergence {
        iteration: usize,
        objective: f64,
        initial: f64,
    },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("unsupported container version {found} in {path} (expected 1)")]
    VersionMismatch { path: PathBuf, found: u32 },

    #[error("unsupported {field}: {value}")]
    Unsupported { field: &'static str, value: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png encoding error: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    /// Stable machine-readable identifier, used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::Numerical(_) => "numerical",
            Error::Construction(_) => "construction",
            Error::Divergence { .. } => "divergence",
            Error::MalformedHeader { .. } => "malformed_header",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Unsupported { .. } => "unsupported",
            Error::OutOfRange(_) => "out_of_range",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Png(_) => "png",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
