//! Evolutionary architecture search for convolutional image-restoration
//! networks, with a built-in reverse-mode tensor engine.
//!
//! The engine is generic over the scalar type: f32 for training, f64 for
//! gradient-check builds.

pub mod checkpoint;
pub mod compiler;
pub mod evolution;
pub mod genome;
pub mod scalar;
pub mod tasks;
pub mod tensor;
pub mod variation;

pub use scalar::Scalar;
pub use tensor::{Shape, TensorData, TensorError};

/// Training-precision tensor.
pub type Tensor32 = TensorData<f32>;
/// Gradient-check-precision tensor.
pub type Tensor64 = TensorData<f64>;
pub type Tape32 = tensor::tape::Tape<f32>;
pub type Tape64 = tensor::tape::Tape<f64>;
