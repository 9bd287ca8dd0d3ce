//! Matrices, a small reverse-mode autodiff tape and the optimizer used by
//! the trainable toy models.

mod graph;
mod matrix;
mod params;

pub use graph::{Graph, Var};
pub use matrix::{dot, softmax_rows, Matrix};
pub use params::{ParamSet, Sgd};
