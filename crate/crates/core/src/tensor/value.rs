use std::fmt;

use crate::error::{Error, Result};

/// Shape of a rank-4 tensor in `(n, c, h, w)` order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Single-sample, single-channel plane.
    pub const fn plane(h: usize, w: usize) -> Self {
        Shape { n: 1, c: 1, h, w }
    }

    pub const fn scalar() -> Self {
        Shape { n: 1, c: 1, h: 1, w: 1 }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense `f32` tensor. The shape is fixed at construction.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "tensor",
                format!("{} values do not fill shape {shape}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Single-channel `h × w` plane from row-major values.
    pub fn from_plane(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        Tensor::from_vec(Shape::plane(h, w), data)
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + h) * s.w + w]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f32) {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + h) * s.w + w] = v;
    }

    /// The `(n, c)` plane as a slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.shape.plane_len();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.shape.plane_len();
        let start = (n * self.shape.c + c) * len;
        &mut self.data[start..start + len]
    }

    /// Scalar value of a `(1, 1, 1, 1)` tensor.
    pub fn item(&self) -> f32 {
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.expect_shape(other.shape, "zip_map")?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len().max(1) as f64
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Reinterpret the data under another shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data)
    }

    /// Stack single-sample tensors of equal shape along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        for t in items {
            if t.shape != s {
                return Err(Error::shape(
                    "stack",
                    format!("expected {s}, got {}", t.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(s.n * items.len(), s.c, s.h, s.w),
            data,
        })
    }

    /// Sample `n` of the batch as a standalone tensor.
    pub fn sample(&self, n: usize) -> Tensor {
        let per = self.shape.c * self.shape.plane_len();
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    pub(crate) fn expect_shape(&self, shape: Shape, op: &'static str) -> Result<()> {
        if self.shape == shape {
            return Ok(());
        }
        let (a, b) = (self.shape.dims(), shape.dims());
        let names = ["batch", "channel", "height", "width"];
        let axis = (0..4).find(|&i| a[i] != b[i]).unwrap_or(0);
        Err(Error::shape(
            op,
            format!(
                "{} dimension differs ({} vs {}); shapes {} and {}",
                names[axis], a[axis], b[axis], self.shape, shape
            ),
        ))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        write!(f, "Tensor{} {:?}", self.shape, preview)?;
        if self.data.len() > 8 {
            write!(f, "…")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn shape_mismatch_names_dimension() {
        let a = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let err = a.expect_shape(Shape::new(1, 3, 3, 3), "add").unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
    }

    #[test]
    fn stack_and_sample_are_inverse() {
        let a = Tensor::from_plane(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_plane(1, 2, vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 1, 1, 2));
        assert_eq!(s.sample(1), b);
    }
}
