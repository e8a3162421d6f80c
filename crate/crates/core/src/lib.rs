//! Walsh-Hadamard transforms, smooth thresholding and the trainable WHT
//! layers built from them.
//!
//! Tensors are batch-major NHWC ([`Tensor4`]). Every routine is generic over
//! [`Scalar`] (`f32` or `f64`).

pub mod error;
pub mod factor;
pub mod gradcheck;
pub mod layers;
pub mod scalar;
pub mod tensor;
pub mod threshold;
pub mod transform;

pub use error::{Result, WhtError};
pub use factor::{parse_factor, scale_exact, Factor};
pub use layers::{
    bwht_expand, bwht_project, fwht2d_layer, fwht_expand, fwht_project, param_count, resample, BlockIndexPlan,
    LayerConfig, LayerKind, ParamCount, WhtLayer, WhtTape,
};
pub use scalar::{Precision, Scalar};
pub use tensor::{BlockTensor, Dims4, Tensor4};
pub use threshold::{
    apply_threshold_tensor, smooth_threshold, soft_threshold, threshold_tensor_backward, weighted_smooth_threshold,
    weighted_smooth_threshold_grads, Broadcast, ThresholdGrads, ThresholdParams, ThresholdTape,
};
pub use transform::{
    dense_matrix, fwht_1d, fwht_2d, fwht_last_axis, hadamard_matrix, walsh_matrix, DenseBinaryMatrix, Normalization,
    NoCount, OpCount, OpCounter, Ordering, SpatialPlan, WalshPlan, WalshSpec,
};

pub type Tensor4f32 = Tensor4<f32>;
pub type Tensor4f64 = Tensor4<f64>;
pub type WhtLayerF32 = WhtLayer<f32>;
pub type WhtLayerF64 = WhtLayer<f64>;
