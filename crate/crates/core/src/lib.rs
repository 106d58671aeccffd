//! Adaptive patch exiting for scalable single-image super-resolution.
//!
//! A multi-exit residual SR network carries a shared regressor that
//! predicts, at every exit, how much the preceding blocks improved a patch.
//! At inference each patch leaves the network at the first exit whose
//! predicted gain falls below a threshold, trading quality for compute.

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod patchwork;

pub use error::{Error, Result};
