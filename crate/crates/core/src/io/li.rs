use log::warn;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tomography::Mask;

/// Linear-interpolation sinogram completion.
///
/// Along each angle row, every run of trace bins is replaced by the straight
/// line between the nearest off-trace bins on either side. Runs touching the
/// detector edge take the single available neighbour. A row that lies wholly
/// inside the trace is filled with its own mean. Off-trace bins are copied
/// unchanged.
pub fn li_baseline(sino: &Tensor, trace: &Mask) -> Result<Tensor> {
    let s = sino.shape();
    if (trace.height(), trace.width()) != (s.h, s.w) {
        return Err(Error::shape(
            "li_baseline",
            format!("trace {}×{} vs sinogram {s}", trace.height(), trace.width()),
        ));
    }
    let mut out = sino.clone();
    for p in 0..s.n * s.c {
        let plane = out.plane_mut(p / s.c, p % s.c);
        for row in 0..s.h {
            let bits = &trace.bits()[row * s.w..(row + 1) * s.w];
            fill_row(&mut plane[row * s.w..(row + 1) * s.w], bits, row);
        }
    }
    Ok(out)
}

fn fill_row(values: &mut [f32], masked: &[bool], row: usize) {
    let n = values.len();
    if masked.iter().all(|&m| m) {
        warn!("li_baseline: angle row {row} is entirely inside the metal trace; using its mean");
        let mean = (values.iter().map(|&v| v as f64).sum::<f64>() / n as f64) as f32;
        values.fill(mean);
        return;
    }
    let mut j = 0;
    while j < n {
        if !masked[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < n && masked[j] {
            j += 1;
        }
        let left = start.checked_sub(1).map(|l| (l, values[l]));
        let right = (j < n).then(|| (j, values[j]));
        for k in start..j {
            values[k] = match (left, right) {
                (Some((l, vl)), Some((r, vr))) => {
                    let t = (k - l) as f32 / (r - l) as f32;
                    vl + t * (vr - vl)
                }
                (Some((_, v)), None) | (None, Some((_, v))) => v,
                (None, None) => unreachable!("row has at least one off-trace bin"),
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_edges() {
        let t = Tensor::from_plane(1, 5, vec![9.0, 2.0, 7.0, 4.0, 9.0]).unwrap();
        let m = Mask::from_bits(1, 5, vec![true, false, true, false, true]).unwrap();
        let out = li_baseline(&t, &m).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn fully_masked_row_uses_mean() {
        let t = Tensor::from_plane(2, 2, vec![1.0, 3.0, 5.0, 6.0]).unwrap();
        let m = Mask::from_bits(2, 2, vec![true, true, false, false]).unwrap();
        let out = li_baseline(&t, &m).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0, 5.0, 6.0]);
    }
}
