//! Dense `f64` tensors with define-by-run reverse-mode differentiation and
//! an Adam optimizer.

mod adam;
pub mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Graph, Unary, Var, MODULUS_FLOOR, SQRT_EPS};
pub use tensor::Tensor;

