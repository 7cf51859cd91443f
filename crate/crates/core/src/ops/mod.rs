//! Forward and backward kernels for every layer kind the networks use.
//!
//! Backward functions are hand-paired with their forwards; there is no graph.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod gap;
mod loss;
mod pool;

pub use activation::{relu_backward, relu_forward};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormGrads, BatchNormParams};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub(crate) use conv::conv2d_backward_selective;
pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use gap::{global_avg_pool_backward, global_avg_pool_forward};
pub use loss::{softmax_cross_entropy, SoftmaxCrossEntropy};
pub use pool::{maxpool2d_backward, maxpool2d_forward, PoolCache};

/// Whether a forward pass is part of training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}
