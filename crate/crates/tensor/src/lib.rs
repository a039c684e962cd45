//! Dense f32 tensors with a tape-free reverse-mode autodiff graph.
//!
//! Every operation that touches a tensor with `requires_grad` records a node
//! holding its parents and a backward closure; [`Tensor::backward`] walks the
//! graph in reverse topological order. Storage is f32, while reductions and
//! matrix-product inner loops accumulate in f64.

mod error;
pub mod io;
mod ops;
mod tensor;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use error::{Result, TensorError};
pub use ops::Conv3dSpec;
pub use tensor::Tensor;
