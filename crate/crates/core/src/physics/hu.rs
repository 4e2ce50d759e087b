use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tomography::Mask;

/// Default metal segmentation threshold.
pub const METAL_THRESHOLD_HU: f32 = 2500.0;

fn check_mu_water(mu_water: f64) -> Result<()> {
    if mu_water > 0.0 && mu_water.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("mu_water must be positive, got {mu_water}")))
    }
}

/// `HU = 1000 (μ − μ_water) / μ_water`.
pub fn hu_from_mu(img: &Tensor, mu_water: f64) -> Result<Tensor> {
    check_mu_water(mu_water)?;
    Ok(img.map(|mu| (1000.0 * (mu as f64 - mu_water) / mu_water) as f32))
}

/// Inverse of [`hu_from_mu`].
pub fn mu_from_hu(img_hu: &Tensor, mu_water: f64) -> Result<Tensor> {
    check_mu_water(mu_water)?;
    Ok(img_hu.map(|hu| (mu_water * (1.0 + hu as f64 / 1000.0)) as f32))
}

/// Pixels at or above `threshold` HU.
pub fn segment_metal(img_hu: &Tensor, threshold: f32) -> Result<Mask> {
    let s = img_hu.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::shape("segment_metal", format!("expected one plane, got {s}")));
    }
    let data = img_hu.data();
    Ok(Mask::from_fn(s.h, s.w, |r, c| data[r * s.w + c] >= threshold))
}
