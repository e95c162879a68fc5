use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("unsupported manifest format_version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{file}: expected {expected} bytes, found {found}")]
    ByteLength {
        file: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in layer `{layer}` at row {row}, column {col}")]
    NonFinite {
        layer: String,
        row: usize,
        col: usize,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown layer `{requested}`; available layers: {}", available.join(", "))]
    UnknownLayer {
        requested: String,
        available: Vec<String>,
    },

    #[error("sample ids differ: {0}")]
    SampleMismatch(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("image error: {0}")]
    Image(String),

    /// An internal consistency check failed. Not caused by user input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for internal invariant
    /// violations, 1 for everything attributable to input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}
