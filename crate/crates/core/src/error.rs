use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ball would hold {projected} vertices, above the cap of {cap}")]
    TooLarge { projected: u128, cap: u128 },

    #[error("integer overflow while counting vertices (k = {k}, r = {radius})")]
    CountOverflow { k: u32, radius: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("active bonds do not form a forest (cycle through vertex {0})")]
    NotAForest(usize),

    #[error("dense routine refused: dimension {dim} exceeds guard {guard}")]
    DenseGuard { dim: usize, guard: usize },

    #[error("dense factorization failed: matrix is singular")]
    Singular,

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
