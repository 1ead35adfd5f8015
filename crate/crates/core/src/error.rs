use thiserror::Error;

use crate::arch::ArchKey;

/// Errors produced anywhere in the search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("op index {index} out of range for vocabulary of size {size}")]
    OpOutOfRange { index: usize, size: usize },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("line {line}: {msg}")]
    TableParse { line: usize, msg: String },

    #[error("duplicate architecture {0} in table")]
    DuplicateKey(ArchKey),

    #[error("architecture {0} missing from benchmark (MISSING_ARCH)")]
    MissingArch(ArchKey),

    #[error("benchmark has no latency model")]
    NoLatencyModel,

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
