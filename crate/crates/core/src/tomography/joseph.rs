//! Joseph's method: each ray is sampled once per image row (or column,
//! whichever the ray crosses more steeply) with linear interpolation between
//! the two nearest pixels. The backprojector replays the same weights as a
//! scatter, so the pair is an exact adjoint.

use super::geometry::Geometry;
use super::ramp::RampFilter;
use crate::error::{Error, Result};

/// Per-angle traversal constants.
#[derive(Clone, Copy, Debug)]
struct AngleParams {
    /// Rays step through image rows (true) or columns (false).
    by_rows: bool,
    /// Continuous pixel index along the line is `base + line·line_step + bin·bin_step`.
    base: f64,
    line_step: f64,
    bin_step: f64,
    /// Path length of one line step, mm.
    weight: f32,
}

/// Interpolation sample of one ray on one line: index into the zero-padded
/// line (`n + 2` values) and the weight of the right neighbour.
#[derive(Clone, Copy, Debug)]
struct Sample {
    idx: u32,
    frac: f32,
}

/// Bins `lo..hi` of one angle sample one line; their samples start at `first`.
#[derive(Clone, Copy, Debug)]
struct Span {
    lo: u32,
    hi: u32,
    first: u32,
}

/// Forward projector, backprojector and ramp filter for one geometry.
///
/// The interpolation indices and weights of every ray sample are tabulated
/// once, so projection and backprojection replay identical arithmetic.
#[derive(Debug)]
pub struct Projector {
    geom: Geometry,
    params: Vec<AngleParams>,
    spans: Vec<Span>,
    samples: Vec<Sample>,
    ramp: RampFilter,
}

impl Projector {
    pub fn new(geom: Geometry) -> Result<Self> {
        geom.validate()?;
        let n = geom.image_size as f64;
        let c = (n - 1.0) / 2.0;
        let d = geom.pixel_spacing as f64;
        let tau = geom.bin_spacing as f64;
        let cb = (geom.n_bins as f64 - 1.0) / 2.0;
        let params: Vec<AngleParams> = geom
            .angles()
            .into_iter()
            .map(|theta| {
                let (s, co) = theta.sin_cos();
                if co.abs() >= s.abs() {
                    // Row i sits at y = (c - i)·d; the ray meets it at
                    // x = (t - y sinθ)/cosθ, i.e. column c + x/d.
                    AngleParams {
                        by_rows: true,
                        base: c - cb * tau / (d * co) - c * s / co,
                        line_step: s / co,
                        bin_step: tau / (d * co),
                        weight: (d / co.abs()) as f32,
                    }
                } else {
                    // Column j sits at x = (j - c)·d; the ray meets it at
                    // y = (t - x cosθ)/sinθ, i.e. row c - y/d.
                    AngleParams {
                        by_rows: false,
                        base: c + cb * tau / (d * s) - c * co / s,
                        line_step: co / s,
                        bin_step: -tau / (d * s),
                        weight: (d / s.abs()) as f32,
                    }
                }
            })
            .collect();
        let n = geom.image_size;
        let mut spans = Vec::with_capacity(params.len() * n);
        let mut samples = Vec::new();
        for p in &params {
            for l in 0..n {
                let start = p.base + l as f64 * p.line_step + 1.0;
                let (lo, hi) = bin_range(&geom, p, l);
                spans.push(Span {
                    lo: lo as u32,
                    hi: hi as u32,
                    first: samples.len() as u32,
                });
                for b in lo..hi {
                    let pos = start + b as f64 * p.bin_step;
                    let i0 = pos.floor();
                    let idx = i0 as isize;
                    // Out-of-range samples read and write the zero padding.
                    samples.push(if idx < 0 || idx as usize > n {
                        Sample { idx: 0, frac: 0.0 }
                    } else {
                        Sample {
                            idx: idx as u32,
                            frac: (pos - i0) as f32,
                        }
                    });
                }
            }
        }
        Ok(Projector {
            geom,
            params,
            spans,
            samples,
            ramp: RampFilter::new(geom.n_bins, geom.bin_spacing)?,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn ramp(&self) -> &RampFilter {
        &self.ramp
    }

    /// Writes the sinogram of `img` (row-major `n × n`) into `sino`
    /// (row-major `n_angles × n_bins`).
    pub fn project_into(&self, img: &[f32], sino: &mut [f32]) {
        let n = self.geom.image_size;
        let nb = self.geom.n_bins;
        assert_eq!(img.len(), n * n);
        assert_eq!(sino.len(), self.geom.n_angles * nb);
        // Lines are padded with a zero on each side so that samples in
        // [-1, n) interpolate against zeros at the border.
        let rows = padded_lines(img, n, false);
        let cols = padded_lines(img, n, true);
        sino.fill(0.0);
        for (k, p) in self.params.iter().enumerate() {
            let row = &mut sino[k * nb..(k + 1) * nb];
            let src = if p.by_rows { &rows } else { &cols };
            for l in 0..n {
                let span = self.spans[k * n + l];
                let line = &src[l * (n + 2)..(l + 1) * (n + 2)];
                let (lo, hi) = (span.lo as usize, span.hi as usize);
                let samples = &self.samples[span.first as usize..span.first as usize + hi - lo];
                for (out, s) in row[lo..hi].iter_mut().zip(samples) {
                    let i = s.idx as usize;
                    *out += p.weight * ((1.0 - s.frac) * line[i] + s.frac * line[i + 1]);
                }
            }
        }
    }

    /// Exact adjoint of [`Projector::project_into`].
    pub fn backproject_into(&self, sino: &[f32], img: &mut [f32]) {
        let n = self.geom.image_size;
        let nb = self.geom.n_bins;
        assert_eq!(img.len(), n * n);
        assert_eq!(sino.len(), self.geom.n_angles * nb);
        let mut acc_rows = vec![0.0f32; n * (n + 2)];
        let mut acc_cols = vec![0.0f32; n * (n + 2)];
        for (k, p) in self.params.iter().enumerate() {
            let row = &sino[k * nb..(k + 1) * nb];
            let dst = if p.by_rows { &mut acc_rows } else { &mut acc_cols };
            for l in 0..n {
                let span = self.spans[k * n + l];
                let line = &mut dst[l * (n + 2)..(l + 1) * (n + 2)];
                let (lo, hi) = (span.lo as usize, span.hi as usize);
                let samples = &self.samples[span.first as usize..span.first as usize + hi - lo];
                for (&v, s) in row[lo..hi].iter().zip(samples) {
                    let i = s.idx as usize;
                    let wv = p.weight * v;
                    line[i] += (1.0 - s.frac) * wv;
                    line[i + 1] += s.frac * wv;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                img[i * n + j] = acc_rows[i * (n + 2) + j + 1] + acc_cols[j * (n + 2) + i + 1];
            }
        }
    }

    pub(crate) fn check_image(&self, len: usize) -> Result<()> {
        let n = self.geom.image_size;
        if len != n * n {
            return Err(Error::shape(
                "forward_project",
                format!("image has {len} pixels, geometry expects {n}×{n}"),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_sino(&self, len: usize) -> Result<()> {
        let (a, b) = (self.geom.n_angles, self.geom.n_bins);
        if len != a * b {
            return Err(Error::shape(
                "back_project",
                format!("sinogram has {len} values, geometry expects {a}×{b}"),
            ));
        }
        Ok(())
    }
}

/// Range of bins whose sample on this line falls in `[-1, n)`.
fn bin_range(geom: &Geometry, p: &AngleParams, line: usize) -> (usize, usize) {
    let n = geom.image_size as f64;
    let start = p.base + line as f64 * p.line_step;
    let a = (-1.0 - start) / p.bin_step;
    let b = (n - start) / p.bin_step;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let lo = lo.ceil().max(0.0) as usize;
    let hi = (hi.floor() + 1.0).clamp(0.0, geom.n_bins as f64) as usize;
    (lo, hi.max(lo))
}

/// Image rows (or columns, if `transposed`) with one zero on either side.
fn padded_lines(img: &[f32], n: usize, transposed: bool) -> Vec<f32> {
    let mut out = vec![0.0; n * (n + 2)];
    for l in 0..n {
        for j in 0..n {
            out[l * (n + 2) + j + 1] = if transposed { img[j * n + l] } else { img[l * n + j] };
        }
    }
    out
}
