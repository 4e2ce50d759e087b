//! Parallel-beam tomography: forward projection, its adjoint, ramp filtering
//! and filtered backprojection, plus binary masks and metal traces.
//!
//! Every operator is linear and exposed both as a direct function on tensors
//! and as a [`LinearOperator`](crate::tensor::LinearOperator) for the autodiff
//! graph, so sinogram-domain losses can backpropagate into image space.

mod geometry;
mod joseph;
mod mask;
mod operators;
mod ramp;

pub use geometry::Geometry;
pub use joseph::Projector;
pub use mask::{Mask, MetalMask, MetalTrace};
pub use operators::{BackProjection, FbpOperator, ForwardProjection, RampFiltering, Tomography};
pub use ramp::RampFilter;

/// Threshold above which a projected metal mask counts as "in the trace".
pub const TRACE_THRESHOLD: f32 = 1e-6;
