use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tomography::Mask;

/// HU range clipped and mapped to `[0, 1]` before computing metrics.
pub const METRIC_RANGE_HU: (f32, f32) = (-1000.0, 2000.0);
/// Reported PSNR when the masked images agree exactly.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn normalized(img_hu: &Tensor) -> Vec<f64> {
    let (lo, hi) = (METRIC_RANGE_HU.0 as f64, METRIC_RANGE_HU.1 as f64);
    img_hu
        .data()
        .iter()
        .map(|&v| ((v as f64).clamp(lo, hi) - lo) / (hi - lo))
        .collect()
}

fn check_pair(x: &Tensor, reference: &Tensor, mask: Option<&Mask>, op: &'static str) -> Result<()> {
    let s = x.shape();
    if s != reference.shape() || s.n != 1 || s.c != 1 {
        return Err(Error::shape(
            op,
            format!("images must be matching single planes, got {s} and {}", reference.shape()),
        ));
    }
    if let Some(m) = mask {
        if (m.height(), m.width()) != (s.h, s.w) {
            return Err(Error::shape(op, format!("mask {}×{} vs image {s}", m.height(), m.width())));
        }
    }
    Ok(())
}

/// PSNR in dB over non-metal pixels of two HU images.
pub fn psnr(x_hu: &Tensor, ref_hu: &Tensor, metal: Option<&Mask>) -> Result<f64> {
    check_pair(x_hu, ref_hu, metal, "psnr")?;
    let (a, b) = (normalized(x_hu), normalized(ref_hu));
    let (mut sum, mut count) = (0.0f64, 0usize);
    for k in 0..a.len() {
        if metal.is_some_and(|m| m.bits()[k]) {
            continue;
        }
        sum += (a[k] - b[k]).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("psnr: every pixel is masked as metal"));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Single-scale SSIM of two HU images with an 11×11 Gaussian window
/// (σ = 1.5), averaged over window positions fully inside the image whose
/// centre is not metal.
pub fn ssim(x_hu: &Tensor, ref_hu: &Tensor, metal: Option<&Mask>) -> Result<f64> {
    check_pair(x_hu, ref_hu, metal, "ssim")?;
    let s = x_hu.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim: {}×{} image is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window",
            s.h, s.w
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (a, b) = (normalized(x_hu), normalized(ref_hu));
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let r = SSIM_WINDOW / 2;
    let (mut total, mut count) = (0.0f64, 0usize);
    for i in r..s.h - r {
        for j in r..s.w - r {
            if metal.is_some_and(|m| m.get(i, j)) {
                continue;
            }
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (di, wi) in taps.iter().enumerate() {
                for (dj, wj) in taps.iter().enumerate() {
                    let w = wi * wj;
                    let k = (i + di - r) * s.w + (j + dj - r);
                    mx += w * a[k];
                    my += w * b[k];
                    sxx += w * a[k] * a[k];
                    syy += w * b[k] * b[k];
                    sxy += w * a[k] * b[k];
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("ssim: every window is centred on metal"));
    }
    Ok(total / count as f64)
}

/// Normalized 1-D Gaussian of odd length `len`.
fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let r = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn identical_images_hit_the_cap() {
        let t = Tensor::full(Shape::plane(16, 16), 40.0);
        assert_eq!(psnr(&t, &t, None).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&t, &t, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_error_of_a_tenth_is_twenty_db() {
        let a = Tensor::full(Shape::plane(8, 8), 0.0);
        let b = Tensor::full(Shape::plane(8, 8), 300.0);
        assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn all_metal_is_rejected() {
        let a = Tensor::zeros(Shape::plane(4, 4));
        let m = Mask::from_fn(4, 4, |_, _| true);
        assert!(psnr(&a, &a, Some(&m)).is_err());
    }

    #[test]
    fn small_images_are_rejected_by_ssim() {
        let a = Tensor::zeros(Shape::plane(10, 10));
        assert!(ssim(&a, &a, None).is_err());
    }
}
