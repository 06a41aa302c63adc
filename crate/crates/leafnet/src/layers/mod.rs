//! Layer forward/backward passes as pure functions. Each backward returns
//! exact analytic gradients of its forward map and is validated against
//! central finite differences in the test suites.

mod batchnorm;
mod conv;
mod dense;
mod loss;
mod pool;

pub use batchnorm::{batchnorm2d_backward, batchnorm2d_eval, batchnorm2d_train, BatchNormParams, BnCache, BnGrads};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_output_size, Conv2dParams, ConvGrads};
pub use dense::{dense_backward, dense_forward, Activation, DenseGrads, DenseParams};
pub use loss::{softmax, softmax_cross_entropy};
pub use pool::{global_avg_backward, global_avg_forward, max_pool2x2_backward, max_pool2x2_forward, MaxPoolCache};

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LayerError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch too small: train-mode batch statistics need at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
}

impl From<crate::tensor::TensorError> for LayerError {
    fn from(e: crate::tensor::TensorError) -> Self {
        LayerError::ShapeMismatch(e.to_string())
    }
}
