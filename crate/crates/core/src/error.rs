use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Wav(#[from] WavError),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error("missing embedding for id {id:?} in {modality} cache")]
    MissingEmbedding { id: String, modality: String },

    #[error("dimension mismatch for id {id:?}: expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("external tool: {0}")]
    Tool(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failure modes when decoding a WAV file.
#[derive(Debug, Error)]
pub enum WavError {
    #[error("audio file not found: {0}")]
    NotFound(PathBuf),
    #[error("malformed RIFF/WAVE data in {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("unsupported codec in {path}: {message}")]
    Unsupported { path: PathBuf, message: String },
    #[error("i/o error reading {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Failure modes of the binary feature-cache container.
#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("truncated cache: {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the last row")]
    TrailingBytes(usize),
    #[error("duplicate id {0:?} in cache")]
    DuplicateId(String),
    #[error("row id is not valid UTF-8")]
    InvalidId,
    #[error("row {id:?} has {found} values, cache dimension is {expected}")]
    RowDimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("cache field does not fit in u32: {0}")]
    Overflow(&'static str),
}
