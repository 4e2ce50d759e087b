use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Band-limited Ram-Lak filter applied along detector rows.
///
/// Rows are zero-padded to the next power of two at or above `2·n_bins` and
/// filtered in the frequency domain with the DFT of the spatial kernel
/// `h[0] = 1/(4τ²)`, `h[odd n] = -1/(π²n²τ²)`, `h[even n] = 0`, scaled by the
/// bin pitch `τ`. The kernel is symmetric and the padding prevents wrap-around,
/// so the operator is self-adjoint.
pub struct RampFilter {
    n_bins: usize,
    padded: usize,
    response: Vec<f32>,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

impl fmt::Debug for RampFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RampFilter")
            .field("n_bins", &self.n_bins)
            .field("padded", &self.padded)
            .finish()
    }
}

impl RampFilter {
    pub fn new(n_bins: usize, bin_spacing: f32) -> Result<Self> {
        if n_bins == 0 || !(bin_spacing > 0.0) {
            return Err(Error::invalid("ramp filter needs bins and a positive pitch"));
        }
        let padded = (2 * n_bins).next_power_of_two();
        let tau = bin_spacing as f64;
        let mut kernel: Vec<Complex<f64>> = (0..padded)
            .map(|j| {
                let n = if j < padded / 2 {
                    j as i64
                } else {
                    j as i64 - padded as i64
                };
                let h = if n == 0 {
                    1.0 / (4.0 * tau * tau)
                } else if n % 2 != 0 {
                    -1.0 / (PI * PI * (n * n) as f64 * tau * tau)
                } else {
                    0.0
                };
                Complex::new(h * tau, 0.0)
            })
            .collect();
        FftPlanner::<f64>::new()
            .plan_fft_forward(padded)
            .process(&mut kernel);
        let response = kernel.iter().map(|c| c.re as f32).collect();
        let mut planner = FftPlanner::<f32>::new();
        Ok(RampFilter {
            n_bins,
            padded,
            response,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
        })
    }

    pub fn padded_len(&self) -> usize {
        self.padded
    }

    /// Real frequency response on the padded DFT grid; index `k` corresponds
    /// to `k / (padded·τ)` cycles per mm.
    pub fn response(&self) -> &[f32] {
        &self.response
    }

    /// Filters every row of a row-major `rows × n_bins` array into `out`.
    pub fn apply(&self, input: &[f32], out: &mut [f32]) {
        let nb = self.n_bins;
        assert_eq!(input.len() % nb, 0);
        assert_eq!(input.len(), out.len());
        let rows = input.len() / nb;
        let mut buf = vec![Complex::new(0.0f32, 0.0); self.padded];
        let scale = 1.0 / self.padded as f32;
        // Two real rows share one complex transform: the response is real and
        // even, so real and imaginary parts stay separated.
        let mut r = 0;
        while r < rows {
            let pair = r + 1 < rows;
            buf.fill(Complex::new(0.0, 0.0));
            for b in 0..nb {
                let im = if pair { input[(r + 1) * nb + b] } else { 0.0 };
                buf[b] = Complex::new(input[r * nb + b], im);
            }
            self.forward.process(&mut buf);
            for (c, &h) in buf.iter_mut().zip(&self.response) {
                *c *= h;
            }
            self.inverse.process(&mut buf);
            for b in 0..nb {
                out[r * nb + b] = buf[b].re * scale;
                if pair {
                    out[(r + 1) * nb + b] = buf[b].im * scale;
                }
            }
            r += 2;
        }
    }
}
