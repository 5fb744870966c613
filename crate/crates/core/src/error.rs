use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weights must be nonnegative and sum to 1 (sum = {0})")]
    WeightsNotNormalized(f64),
    #[error("all masses are zero")]
    AllZeroMasses,
    #[error("gamma must be nonnegative, got {0}")]
    NegativeGamma(f64),
    #[error("sketch config mismatch")]
    ConfigMismatch,
    #[error("k = {k} out of range for coreset of size {size}")]
    KOutOfRange { k: usize, size: usize },
    #[error("coreset of size {size} exceeds the enumeration cap {cap}")]
    CoresetTooLarge { size: usize, cap: usize },
    #[error("reducer returned {size} entries, bound is {bound}")]
    ReducerOversize { size: usize, bound: usize },
    #[error("pass order violation: {0}")]
    PassOrder(String),
    #[error("point count mismatch between passes: pass 1 saw {first}, pass 2 saw {second}")]
    PointCountMismatch { first: usize, second: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
