use std::f64::consts::PI;
use std::sync::Arc;

use super::geometry::Geometry;
use super::joseph::Projector;
use super::mask::Mask;
use super::TRACE_THRESHOLD;
use crate::error::{Error, Result};
use crate::tensor::{LinearOperator, Shape, Tensor};

/// Image → sinogram.
#[derive(Debug, Clone)]
pub struct ForwardProjection(pub Arc<Projector>);

/// Sinogram → image, the exact adjoint of [`ForwardProjection`].
#[derive(Debug, Clone)]
pub struct BackProjection(pub Arc<Projector>);

/// Row-wise Ram-Lak filtering of a sinogram.
#[derive(Debug, Clone)]
pub struct RampFiltering(pub Arc<Projector>);

/// Filtered backprojection `(π / n_angles)·(τ / d²)·Pᵀ(ramp(s))`.
#[derive(Debug, Clone)]
pub struct FbpOperator(pub Arc<Projector>);

fn image_dims(p: &Projector) -> (usize, usize) {
    let n = p.geometry().image_size;
    (n, n)
}

fn sino_dims(p: &Projector) -> (usize, usize) {
    (p.geometry().n_angles, p.geometry().n_bins)
}

/// Scale that turns the Joseph adjoint into an angular integral: the
/// backprojector sums `d/|cos θ|`-weighted tents whose total per pixel is
/// `d²/τ`, and the angular step is `π / n_angles`.
fn fbp_scale(g: &Geometry) -> f32 {
    let d = g.pixel_spacing as f64;
    (PI / g.n_angles as f64 * g.bin_spacing as f64 / (d * d)) as f32
}

impl LinearOperator for ForwardProjection {
    fn name(&self) -> &'static str {
        "forward_project"
    }
    fn input_dims(&self) -> (usize, usize) {
        image_dims(&self.0)
    }
    fn output_dims(&self) -> (usize, usize) {
        sino_dims(&self.0)
    }
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        self.0.project_into(x, y);
    }
    fn apply_adjoint(&self, y: &[f32], x: &mut [f32]) {
        self.0.backproject_into(y, x);
    }
}

impl LinearOperator for BackProjection {
    fn name(&self) -> &'static str {
        "back_project"
    }
    fn input_dims(&self) -> (usize, usize) {
        sino_dims(&self.0)
    }
    fn output_dims(&self) -> (usize, usize) {
        image_dims(&self.0)
    }
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        self.0.backproject_into(x, y);
    }
    fn apply_adjoint(&self, y: &[f32], x: &mut [f32]) {
        self.0.project_into(y, x);
    }
}

impl LinearOperator for RampFiltering {
    fn name(&self) -> &'static str {
        "ramp_filter"
    }
    fn input_dims(&self) -> (usize, usize) {
        sino_dims(&self.0)
    }
    fn output_dims(&self) -> (usize, usize) {
        sino_dims(&self.0)
    }
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        self.0.ramp().apply(x, y);
    }
    fn apply_adjoint(&self, y: &[f32], x: &mut [f32]) {
        self.0.ramp().apply(y, x);
    }
}

impl LinearOperator for FbpOperator {
    fn name(&self) -> &'static str {
        "fbp"
    }
    fn input_dims(&self) -> (usize, usize) {
        sino_dims(&self.0)
    }
    fn output_dims(&self) -> (usize, usize) {
        image_dims(&self.0)
    }
    fn apply(&self, x: &[f32], y: &mut [f32]) {
        let mut filtered = vec![0.0; x.len()];
        self.0.ramp().apply(x, &mut filtered);
        self.0.backproject_into(&filtered, y);
        let s = fbp_scale(self.0.geometry());
        y.iter_mut().for_each(|v| *v *= s);
    }
    fn apply_adjoint(&self, y: &[f32], x: &mut [f32]) {
        let mut sino = vec![0.0; x.len()];
        self.0.project_into(y, &mut sino);
        self.0.ramp().apply(&sino, x);
        let s = fbp_scale(self.0.geometry());
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Convenience front end over one [`Projector`].
///
/// All methods accept tensors with any batch and channel count whose planes
/// match the geometry.
#[derive(Debug, Clone)]
pub struct Tomography {
    proj: Arc<Projector>,
}

impl Tomography {
    pub fn new(geom: Geometry) -> Result<Self> {
        Ok(Tomography {
            proj: Arc::new(Projector::new(geom)?),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        self.proj.geometry()
    }

    pub fn projector(&self) -> &Arc<Projector> {
        &self.proj
    }

    pub fn fp_op(&self) -> Arc<dyn LinearOperator> {
        Arc::new(ForwardProjection(self.proj.clone()))
    }

    pub fn bp_op(&self) -> Arc<dyn LinearOperator> {
        Arc::new(BackProjection(self.proj.clone()))
    }

    pub fn ramp_op(&self) -> Arc<dyn LinearOperator> {
        Arc::new(RampFiltering(self.proj.clone()))
    }

    pub fn fbp_op(&self) -> Arc<dyn LinearOperator> {
        Arc::new(FbpOperator(self.proj.clone()))
    }

    pub fn fbp_scale(&self) -> f32 {
        fbp_scale(self.geometry())
    }

    fn map_planes(&self, t: &Tensor, op: &dyn LinearOperator) -> Result<Tensor> {
        let s = t.shape();
        let (ih, iw) = op.input_dims();
        if (s.h, s.w) != (ih, iw) {
            return Err(Error::shape(
                op.name(),
                format!("plane {}×{} does not match geometry {ih}×{iw}", s.h, s.w),
            ));
        }
        let (oh, ow) = op.output_dims();
        let os = Shape::new(s.n, s.c, oh, ow);
        let mut out = Tensor::zeros(os);
        for p in 0..s.n * s.c {
            op.apply(
                &t.data()[p * s.plane_len()..(p + 1) * s.plane_len()],
                &mut out.data_mut()[p * os.plane_len()..(p + 1) * os.plane_len()],
            );
        }
        Ok(out)
    }

    pub fn forward_project(&self, img: &Tensor) -> Result<Tensor> {
        self.proj.check_image(img.shape().plane_len())?;
        self.map_planes(img, &ForwardProjection(self.proj.clone()))
    }

    pub fn back_project(&self, sino: &Tensor) -> Result<Tensor> {
        self.proj.check_sino(sino.shape().plane_len())?;
        self.map_planes(sino, &BackProjection(self.proj.clone()))
    }

    pub fn ramp_filter(&self, sino: &Tensor) -> Result<Tensor> {
        self.proj.check_sino(sino.shape().plane_len())?;
        self.map_planes(sino, &RampFiltering(self.proj.clone()))
    }

    pub fn fbp(&self, sino: &Tensor) -> Result<Tensor> {
        self.proj.check_sino(sino.shape().plane_len())?;
        self.map_planes(sino, &FbpOperator(self.proj.clone()))
    }

    /// Binary sinogram footprint of a metal mask: `FP(mask) > 1e-6`.
    pub fn metal_trace(&self, mask: &Mask) -> Result<Mask> {
        let n = self.geometry().image_size;
        if (mask.height(), mask.width()) != (n, n) {
            return Err(Error::shape(
                "metal_trace",
                format!("mask {}×{} vs geometry {n}×{n}", mask.height(), mask.width()),
            ));
        }
        let proj = self.forward_project(&mask.to_tensor())?;
        Ok(Mask::threshold(&proj, TRACE_THRESHOLD))
    }
}
