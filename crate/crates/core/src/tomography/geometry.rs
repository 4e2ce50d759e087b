use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Parallel-beam acquisition geometry.
///
/// The image is `image_size × image_size` pixels centred on the rotation axis.
/// Angles are `k·π / n_angles` for `k = 0..n_angles` (π itself is excluded) and
/// detector bins are centred on the axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub image_size: usize,
    /// Pixel pitch in mm.
    pub pixel_spacing: f32,
    pub n_angles: usize,
    pub n_bins: usize,
    /// Detector bin pitch in mm.
    pub bin_spacing: f32,
}

impl Default for Geometry {
    /// Desk-scale default: 128² image, 1 mm pixels, 180 angles, 185 bins.
    fn default() -> Self {
        Geometry {
            image_size: 128,
            pixel_spacing: 1.0,
            n_angles: 180,
            n_bins: 185,
            bin_spacing: 1.0,
        }
    }
}

impl Geometry {
    pub fn new(
        image_size: usize,
        pixel_spacing: f32,
        n_angles: usize,
        n_bins: usize,
        bin_spacing: f32,
    ) -> Result<Self> {
        let g = Geometry {
            image_size,
            pixel_spacing,
            n_angles,
            n_bins,
            bin_spacing,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry for an `image_size` grid with unit spacing and the minimal
    /// odd bin count covering the image diagonal.
    pub fn square(image_size: usize, n_angles: usize) -> Result<Self> {
        let mut bins = (2f64.sqrt() * image_size as f64).ceil() as usize;
        if bins.is_multiple_of(2) {
            bins += 1;
        }
        Geometry::new(image_size, 1.0, n_angles, bins, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.n_angles == 0 || self.n_bins == 0 {
            return Err(Error::invalid("geometry sizes must be positive"));
        }
        if !(self.pixel_spacing > 0.0) || !(self.bin_spacing > 0.0) {
            return Err(Error::invalid("geometry spacings must be positive"));
        }
        let needed = self.min_bins();
        if self.n_bins < needed {
            return Err(Error::invalid(format!(
                "{} detector bins cannot cover a {}-pixel image; need at least {needed}",
                self.n_bins, self.image_size
            )));
        }
        Ok(())
    }

    /// `ceil(√2 · field of view / bin pitch)`.
    pub fn min_bins(&self) -> usize {
        let fov = self.image_size as f64 * self.pixel_spacing as f64;
        (2f64.sqrt() * fov / self.bin_spacing as f64 - 1e-9).ceil() as usize
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.n_angles as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angles).map(|k| self.angle(k)).collect()
    }

    /// Signed distance of bin `b`'s centre from the rotation axis, mm.
    pub fn bin_offset(&self, b: usize) -> f64 {
        (b as f64 - (self.n_bins as f64 - 1.0) / 2.0) * self.bin_spacing as f64
    }

    /// Physical `(x, y)` of pixel `(row, col)`, x to the right, y up, mm.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        let d = self.pixel_spacing as f64;
        ((col as f64 - c) * d, (c - row as f64) * d)
    }

    pub fn image_shape(&self) -> Shape {
        Shape::plane(self.image_size, self.image_size)
    }

    pub fn sino_shape(&self) -> Shape {
        Shape::plane(self.n_angles, self.n_bins)
    }
}
