//! Differentiable building blocks with explicit tapes.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod se;
pub mod wht;

pub use activation::{relu_backward, relu_forward, sigmoid};
pub use conv::{conv2d_direct, same_padding, Conv2d, ConvShape, ConvTape};
pub use dense::{Dense, DenseTape};
pub use loss::{argmax, softmax_cross_entropy, LossOutput};
pub use norm::{BatchNorm, BatchNormTape, BN_EPSILON, BN_MOMENTUM};
pub use pool::{gap_backward, gap_forward, subsample_backward, subsample_dims, subsample_forward};
pub use se::{reduced_channels, SeTape, SqueezeExcite};
pub use wht::WhtNode;
