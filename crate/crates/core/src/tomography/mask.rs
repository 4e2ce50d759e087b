use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Binary mask on a single plane.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

/// Image-domain metal mask.
pub type MetalMask = Mask;
/// Sinogram-domain footprint of a metal mask.
pub type MetalTrace = Mask;

impl Mask {
    pub fn empty(h: usize, w: usize) -> Self {
        Mask {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    pub fn from_bits(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::shape(
                "mask",
                format!("{} bits for a {h}×{w} mask", bits.len()),
            ));
        }
        Ok(Mask { h, w, bits })
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..h * w).map(|k| f(k / w, k % w)).collect();
        Mask { h, w, bits }
    }

    /// Accepts a single-plane tensor whose values are exactly 0 or 1.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::shape("mask", format!("expected one plane, got {s}")));
        }
        let mut bits = Vec::with_capacity(t.numel());
        for &v in t.data() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                other => {
                    return Err(Error::invalid(format!(
                        "mask must be binary, found value {other}"
                    )))
                }
            }
        }
        Ok(Mask {
            h: s.h,
            w: s.w,
            bits,
        })
    }

    /// `value > threshold` elementwise on one plane.
    pub fn threshold(t: &Tensor, threshold: f32) -> Self {
        let s = t.shape();
        Mask {
            h: s.h,
            w: s.w,
            bits: t.data()[..s.plane_len()].iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.w + col] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// 1.0 inside, 0.0 outside.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            Shape::plane(self.h, self.w),
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dimensions are consistent")
    }

    /// 0.0 inside, 1.0 outside.
    pub fn complement_tensor(&self) -> Tensor {
        Tensor::from_vec(
            Shape::plane(self.h, self.w),
            self.bits.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect(),
        )
        .expect("mask dimensions are consistent")
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if (self.h, self.w) != (other.h, other.w) {
            return Err(Error::shape("mask union", "mask sizes differ"));
        }
        Ok(Mask {
            h: self.h,
            w: self.w,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// Dilation with a `(2r+1)²` square structuring element.
    pub fn dilate(&self, r: usize) -> Mask {
        let mut out = self.clone();
        if r == 0 {
            return out;
        }
        for i in 0..self.h {
            for j in 0..self.w {
                if !self.get(i, j) {
                    continue;
                }
                for ii in i.saturating_sub(r)..(i + r + 1).min(self.h) {
                    for jj in j.saturating_sub(r)..(j + r + 1).min(self.w) {
                        out.bits[ii * self.w + jj] = true;
                    }
                }
            }
        }
        out
    }
}
