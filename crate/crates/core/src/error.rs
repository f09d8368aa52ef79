use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown item {0:?}")]
    UnknownItem(String),

    #[error("no embedding for item {0:?}")]
    MissingEmbedding(String),

    #[error(transparent)]
    ModelFormat(#[from] FormatError),
}

/// Failures while decoding a persisted model file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("model checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("malformed model body: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Stable machine-readable name of the failure class.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "file-not-found",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyDataset => "empty-dataset",
            Error::ContractViolation(_) => "contract-violation",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Config(_) => "config",
            Error::UnknownItem(_) => "unknown-item",
            Error::MissingEmbedding(_) => "missing-embedding",
            Error::ModelFormat(_) => "model-format",
        }
    }

    /// Process exit code for this failure class; 2 is left for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "file-not-found" => 3,
            "io" => 4,
            "parse" => 5,
            "empty-dataset" => 6,
            "contract-violation" => 7,
            "dimension-mismatch" => 8,
            "invalid-parameter" => 9,
            "config" => 10,
            "unknown-item" => 11,
            "missing-embedding" => 12,
            _ => 13,
        }
    }
}
