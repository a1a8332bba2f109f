//! Dense `f64` tensors, a reverse-mode tape, Adam, and gradient checking.

mod adam;
pub mod dft;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{AttentionMask, Gradients, Graph, Var, MASK_BIAS};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

pub(crate) use tensor::dot;

#[cfg(test)]
mod tests;
