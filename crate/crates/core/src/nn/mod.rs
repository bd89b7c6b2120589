//! Small dense differentiable kernels with hand-written backward passes.
//!
//! Every layer keeps its own gradient buffers; backward calls accumulate into
//! them until [`zero_grad`] is called. Forward passes that need to be
//! differentiated return a cache which the matching backward consumes.

mod adamw;
mod batchnorm;
mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod ops;
mod param;

pub use adamw::AdamW;
pub use batchnorm::{BatchNorm1d, BnCache, Mode};
pub use checkpoint::Checkpoint;
pub use dense::Dense;
pub use gradcheck::{gradcheck, GradCheckReport};
pub use loss::{bce_loss, offset_l1_loss, offset_l1_loss_masked, BCE_CLAMP};
pub use ops::{
    knn_indices, knn_sample_group, relu, relu_backward, sigmoid, softmax, softmax_rows, SampleGroup,
};
pub use param::{flat_grads, flat_params, set_flat_params, zero_grad, Module, Tensor};

pub type Matrix = ndarray::Array2<f64>;
