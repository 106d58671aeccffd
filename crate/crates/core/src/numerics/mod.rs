//! Minimal reverse-mode tensor engine: the operations the multi-exit network
//! needs, their gradients, and the Adam optimizer.

mod backward;
mod ops;
mod param;
mod real;
mod tensor;

pub use backward::{backward, Gradients};
pub use ops::{
    add, conv2d, global_avg_pool, l1_loss, l1_loss_with, linear, mse_loss, mse_loss_with, pixel_shuffle,
    pixel_unshuffle, relu, scale, sum, tanh_op,
};
pub use param::{adam_step, AdamConfig, Parameter};
pub use real::Real;
pub use tensor::{Reduction, Tensor, TensorId};

#[cfg(test)]
mod tests;
