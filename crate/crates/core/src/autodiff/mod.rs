//! Dense tensors and a reverse-mode differentiation graph.
//!
//! Graphs are built incrementally: append nodes with the builder methods on
//! [`Graph`], run [`Graph::evaluate`] against a set of named input bindings,
//! optionally append more nodes and [`Evaluation::resume`], then call
//! [`Evaluation::backward`] on a scalar node. A graph is immutable once
//! evaluated against, so the same graph can be evaluated for several input
//! bindings independently.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckEntry, GradCheckReport};
pub use graph::{Bindings, Evaluation, Gradients, Graph, NodeId};
pub(crate) use graph::logsumexp;
pub use tensor::Tensor;

/// Floor applied under square roots in distance computations.
pub const SQRT_FLOOR: f64 = 1e-12;
