//! Reverse-mode automatic differentiation over dense 2-D `f64` tensors.
//!
//! A [`Tape`] is built per forward pass: parameters are registered as leaves,
//! every op appends a node, and [`Tape::backward`] sweeps the nodes in reverse
//! to produce gradients for all registered parameters.

pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use ops::{sigmoid, softplus, Axis, BinaryOp, ReduceOp, UnaryOp, DIV_GUARD};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
