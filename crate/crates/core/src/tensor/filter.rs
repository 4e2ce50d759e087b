//! Fixed spatial filters with replicate padding: separable Gaussian blur and
//! the 3×3 Sobel pair. Each has an explicit adjoint for backpropagation.

use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f32) -> Result<Vec<f32>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma as f64).ceil() as i64;
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / s2).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|v| (v / total) as f32).collect())
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur on single planes.
#[derive(Clone, Debug)]
pub struct GaussianBlur {
    taps: Vec<f32>,
}

impl GaussianBlur {
    pub fn new(sigma: f32) -> Result<Self> {
        Ok(GaussianBlur {
            taps: gaussian_kernel(sigma)?,
        })
    }

    pub fn taps(&self) -> &[f32] {
        &self.taps
    }

    fn radius(&self) -> isize {
        (self.taps.len() / 2) as isize
    }

    pub fn apply(&self, x: &[f32], h: usize, w: usize, out: &mut [f32]) {
        let r = self.radius();
        let mut tmp = vec![0.0f32; h * w];
        for i in 0..h {
            let row = &x[i * w..(i + 1) * w];
            for j in 0..w {
                let mut acc = 0.0;
                for (t, &wt) in self.taps.iter().enumerate() {
                    acc += wt * row[clamp_index(j as isize + t as isize - r, w)];
                }
                tmp[i * w + j] = acc;
            }
        }
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (t, &wt) in self.taps.iter().enumerate() {
                    acc += wt * tmp[clamp_index(i as isize + t as isize - r, h) * w + j];
                }
                out[i * w + j] = acc;
            }
        }
    }

    /// Accumulates the adjoint of [`GaussianBlur::apply`] into `dx`.
    pub fn apply_adjoint(&self, dy: &[f32], h: usize, w: usize, dx: &mut [f32]) {
        let r = self.radius();
        let mut dtmp = vec![0.0f32; h * w];
        for i in 0..h {
            for j in 0..w {
                let g = dy[i * w + j];
                for (t, &wt) in self.taps.iter().enumerate() {
                    dtmp[clamp_index(i as isize + t as isize - r, h) * w + j] += wt * g;
                }
            }
        }
        for i in 0..h {
            for j in 0..w {
                let g = dtmp[i * w + j];
                for (t, &wt) in self.taps.iter().enumerate() {
                    dx[i * w + clamp_index(j as isize + t as isize - r, w)] += wt * g;
                }
            }
        }
    }
}

const SOBEL_X: [[f32; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f32; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Horizontal and vertical Sobel responses of one plane.
pub(crate) fn sobel_components(x: &[f32], h: usize, w: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (mut ax, mut ay) = (0.0, 0.0);
            for a in 0..3 {
                let ii = clamp_index(i as isize + a as isize - 1, h);
                for b in 0..3 {
                    let jj = clamp_index(j as isize + b as isize - 1, w);
                    let v = x[ii * w + jj];
                    ax += SOBEL_X[a][b] * v;
                    ay += SOBEL_Y[a][b] * v;
                }
            }
            gx[i * w + j] = ax;
            gy[i * w + j] = ay;
        }
    }
    (gx, gy)
}

/// Accumulates the adjoint of [`sobel_components`] into `dx`.
pub(crate) fn sobel_adjoint(dgx: &[f32], dgy: &[f32], h: usize, w: usize, dx: &mut [f32]) {
    for i in 0..h {
        for j in 0..w {
            let (gx, gy) = (dgx[i * w + j], dgy[i * w + j]);
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            for a in 0..3 {
                let ii = clamp_index(i as isize + a as isize - 1, h);
                for b in 0..3 {
                    let jj = clamp_index(j as isize + b as isize - 1, w);
                    dx[ii * w + jj] += SOBEL_X[a][b] * gx + SOBEL_Y[a][b] * gy;
                }
            }
        }
    }
}
