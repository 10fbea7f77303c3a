use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes that do not compose.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input rejected by an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: bad checkpoint magic {found:?}")]
    BadCheckpointMagic { path: PathBuf, found: Vec<u8> },

    #[error("{path}: truncated file ({actual} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: corrupt length ({actual} bytes, expected {expected})")]
    CorruptLength {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: unsupported checkpoint version {found} (this build reads {supported})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        // Written as a negation so NaN comparisons fail the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
