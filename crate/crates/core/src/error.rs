//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("non-finite gradient for parameter {name:?}; optimizer step rejected")]
    NonFiniteGradient { name: String },

    #[error("loss became non-finite at {unit} {index}")]
    Diverged { unit: &'static str, index: usize },

    #[error("{path}: bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("{path}: unsupported format version {found} (loader supports {supported})")]
    BadVersion {
        path: String,
        found: u32,
        supported: u32,
    },

    #[error("{path}: truncated at byte {offset}: expected {expected} more bytes, found {found}")]
    Truncated {
        path: String,
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: duplicate tensor name {name:?}")]
    DuplicateTensor { path: String, name: String },

    #[error("{path}: malformed payload at byte {offset}: {msg}")]
    Malformed {
        path: String,
        offset: usize,
        msg: String,
    },

    #[error("category {category}: {available} latents available, {requested} cluster centers requested")]
    UndersizedCategory {
        category: usize,
        available: usize,
        requested: usize,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
