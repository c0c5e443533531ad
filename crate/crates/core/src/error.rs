use std::path::PathBuf;

/// Errors raised by the audio match cut pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("crossfade of {needed} samples does not fit ({available} available)")]
    CrossfadeTooLong { needed: usize, available: usize },
    #[error("cut point {cut} out of range for clip of {len} samples")]
    CutOutOfRange { cut: usize, len: usize },
    #[error("ranking has no positives")]
    NoPositives,
    #[error("missing id: {0}")]
    MissingId(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
