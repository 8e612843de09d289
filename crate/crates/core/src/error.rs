use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for tensor of order {order} (modes are 1-based)")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("mode {0} appears more than once in a multi-mode product")]
    DuplicateMode(usize),

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} would allocate {elements} elements, above the limit of {limit}")]
    SizeLimit {
        what: &'static str,
        elements: u128,
        limit: u128,
    },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero tensor has no best rank-1 approximation")]
    ZeroTensor,

    #[error("malformed tensor header {path}: {reason}")]
    Header { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
