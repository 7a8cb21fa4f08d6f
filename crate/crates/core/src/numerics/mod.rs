//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records each operation of a forward pass; [`Graph::backward`]
//! replays it in reverse. Trainable values live in a [`ParamStore`] and enter
//! a graph through [`Graph::param`]. Everything is single-threaded and
//! deterministic.

mod adam;
mod graph;
mod param;
mod sparsemax;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{BatchNormSpec, BnMode, CustomOp, Gradients, Graph, NodeId};
pub use param::{ParamId, ParamStore, Parameter};
pub use sparsemax::{sparsemax_row, sparsemax_row_backward, sparsemax_rows};
pub use tensor::Tensor;
