use thiserror::Error;

/// Errors raised by the inpainting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid patch spec: {0}")]
    InvalidPatch(String),

    #[error("{0} element(s) are not covered by any patch")]
    Uncovered(usize),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid sampler: {0}")]
    Sampler(String),

    #[error("inference diverged: {0}")]
    Divergence(String),

    #[error("incompatible dictionary: {0}")]
    IncompatibleDictionary(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem {0:?} already exists")]
    DuplicateProblem(String),

    #[error("unknown problem {0:?}")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
