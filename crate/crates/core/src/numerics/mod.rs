//! Layer forward/backward kernels.
//!
//! Each layer exposes a `*_forward` function, a `*_backward` function that
//! consumes whatever the forward pass saved, and a combined entry point
//! taking an optional upstream gradient. Backward functions return the exact
//! gradient of `Σ upstream ⊙ output`.

mod activation;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod group_norm;
mod kernels;
mod pool;

use alloc::vec::Vec;

use crate::tensor::Tensor;

pub use activation::{leaky_relu, leaky_relu_backward, leaky_relu_forward, softmax, DEFAULT_LRELU_SLOPE};
pub use conv::{conv2d, conv2d_backward, conv2d_forward};
pub use dense::{Dense, fully_connected, fully_connected_backward, fully_connected_forward};
pub use dropout::{dropout, dropout_backward, Mode};
pub use gradcheck::{finite_diff_check, Differentiable, FnWithGrad};
pub use group_norm::{
    default_groups, group_norm, group_norm_backward, group_norm_forward, GroupNormCache, DEFAULT_GN_EPS,
};
pub use pool::{max_pool2_backward, max_pool2_forward};

/// Gradients produced by a layer's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_input: Tensor,
    /// One tensor per layer parameter, in the layer's parameter order.
    pub d_params: Vec<Tensor>,
}
