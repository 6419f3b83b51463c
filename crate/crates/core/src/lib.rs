//! Layered spatial-mixture scene modeling with amortized variational
//! inference, two-stage training with generative replay, dataset synthesis,
//! and evaluation metrics.

pub mod error;
pub mod graph;
pub mod math;
pub mod ops;
pub mod real;
pub mod tensor;
pub mod warp;

pub use error::{AdiError, Result};
pub use graph::{Graph, Var};
pub use real::Real;
pub use tensor::Tensor;
