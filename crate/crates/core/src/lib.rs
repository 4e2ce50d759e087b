//! Metal artifact simulation and reduction for parallel-beam CT.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: a small tape-based reverse-mode autodiff engine over rank-4
//!   `f32` tensors, plus parameter storage and Adam.
//! * [`tomography`]: Joseph forward projection, its exact adjoint, the
//!   Ram-Lak ramp filter and filtered backprojection. All are linear operators
//!   that plug into the autodiff graph.
//! * [`physics`]: polychromatic beam-hardening simulation, the additive
//!   artifact decomposition, HU conversion and the procedural phantom generator.
//! * [`networks`]: U-Nets for sinogram inpainting, sinogram enhancement and
//!   image-domain artifact estimation, plus PatchGAN discriminators.
//! * [`pipeline`]: the two-phase cyclic artifact reduction framework, its
//!   losses and the training loop.
//! * [`io`]: raw tensor files, datasets, image metrics, the linear
//!   interpolation baseline and PNG export.

// Negated comparisons are how NaN is rejected alongside out-of-range values,
// and the numeric kernels index several buffers with one loop counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod io;
pub mod networks;
pub mod physics;
pub mod pipeline;
pub mod tensor;
pub mod tomography;

pub use error::{Error, Result};
pub use tensor::{Graph, ParamStore, Shape, Tensor, Var};
pub use tomography::Geometry;
