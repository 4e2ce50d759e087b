//! Rank-4 tensors and a tape-based reverse-mode autodiff engine.
//!
//! Values are `(batch, channels, height, width)` `f32` arrays. A [`Graph`] is a
//! tape that is rebuilt on every forward pass: each operation appends a node,
//! and [`Graph::backward`] walks the tape in reverse.

mod conv;
mod direct;
mod filter;
mod graph;
mod params;
mod value;

pub use conv::conv2d_forward;
pub use filter::{gaussian_kernel, GaussianBlur};
pub use graph::{Graph, LinearOperator, Var};
pub use params::{adam_step, AdamConfig, Bindings, ParamStore};
pub use value::{Shape, Tensor};
