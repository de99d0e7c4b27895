//! Reverse-mode differentiation over a closed set of tensor operations.
//!
//! A [`Graph`] is built once from named leaves and can be re-evaluated with
//! different bindings; [`Graph::backward`] returns gradients keyed by
//! parameter name.

mod check;
mod graph;
mod ops;
mod store;

pub use check::{finite_difference_check, FdReport};
pub use graph::{Graph, GradientSet, NodeId, Op};
pub use ops::{gelu, gelu_grad};
pub use store::ParamStore;
