use thiserror::Error;

/// Errors raised by transforms, thresholding and the WHT layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhtError {
    #[error("transform order {order} exceeds the maximum of {max}")]
    OrderTooLarge { order: u32, max: u32 },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("weight must be non-negative, got {0}")]
    NegativeWeight(f64),

    #[error("block size {block} is larger than the {channels} available channels")]
    BlockTooLarge { block: usize, channels: usize },

    #[error("invalid channel factor: {0}")]
    InvalidFactor(String),

    #[error("invalid layer config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = WhtError> = std::result::Result<T, E>;
