//! Minimal reverse-mode differentiable compute: tensors, layer primitives
//! with hand-written backward passes, Adam, gradient checking, and a
//! checkpoint format. Everything is 64-bit and single-threaded per network
//! instance.

mod adam;
mod gradcheck;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, Parameter};
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{
    causal_conv1d_backward, causal_conv1d_forward, cosine_similarity,
    cosine_similarity_backward, dense_backward, dense_forward, global_mean_pool_backward,
    global_mean_pool_forward, l2_normalize_backward, l2_normalize_forward, relu_backward,
    relu_forward,
};
pub use params::{ParamBundle, ParamEntry, PARAM_FORMAT_VERSION};
pub use tensor::Tensor;
