//! Quantization-aware training for recurrent networks.
//!
//! Weights are kept in full precision ("shadow" weights) and quantized to
//! binary, ternary or quaternary levels on every forward pass. Gradients
//! computed against the quantized weights are applied to the shadows
//! unchanged (straight-through estimator).

pub mod autograd;
pub mod cells;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod models;
pub mod gradcheck;
mod kernels;
pub mod quantize;
pub mod tensor;
pub mod training;

pub use autograd::{Grad, Graph, TemporalPadding, Var};
pub use error::{Error, Result};
pub use quantize::{DistShape, QuantScheme};
pub use tensor::{mean_std, DType, Scalar, Tensor};
