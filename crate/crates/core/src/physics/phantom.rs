use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Shape, Tensor};
use crate::tomography::Mask;

/// Axis-aligned-then-rotated ellipse in pixel coordinates (x = column, y = row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl Ellipse {
    /// Squared normalized radius of `(x, y)`; `< 1` inside.
    pub fn radius2(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.radius2(x, y) < 1.0
    }

    /// Point at normalized polar position `(r, phi)` inside the ellipse.
    fn point_at(&self, r: f64, phi: f64) -> (f64, f64) {
        let (u, v) = (r * self.a * phi.cos(), r * self.b * phi.sin());
        let (s, c) = self.angle.sin_cos();
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }
}

/// A metal-free attenuation map plus the metal inserted into it.
#[derive(Clone, Debug)]
pub struct PhantomCase {
    /// Metal-free attenuation at the effective energy, mm⁻¹.
    pub x_ac: Tensor,
    /// Pixels occupied by metal.
    pub mask: Mask,
    /// Relative metal density; zero outside `mask`.
    pub metal_density: Tensor,
    /// Pixels that contain nothing but the water-equivalent body.
    pub water: Mask,
}

impl PhantomCase {
    pub fn size(&self) -> usize {
        self.mask.height()
    }
}

/// Parameter ranges for the procedural phantom. Lengths are fractions of the
/// image side; densities are relative to water.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub body_a: (f64, f64),
    pub body_b: (f64, f64),
    pub body_offset: f64,
    pub body_tilt: f64,
    pub tissue_count: (usize, usize),
    pub tissue_axis: (f64, f64),
    pub tissue_density: (f64, f64),
    pub bone_count: (usize, usize),
    pub bone_axis: (f64, f64),
    pub metal_count: (usize, usize),
    pub metal_axis: (f64, f64),
    /// Smallest metal semi-axis in pixels, whatever the image size.
    pub metal_min_axis_px: f64,
    pub metal_density: (f64, f64),
    /// Inserts stay within this normalized radius of the body ellipse.
    pub insert_radius: f64,
    /// Sub-pixel samples per axis when rasterizing tissue.
    pub supersample: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            body_a: (0.34, 0.44),
            body_b: (0.26, 0.36),
            body_offset: 0.03,
            body_tilt: 0.3,
            tissue_count: (2, 5),
            tissue_axis: (0.04, 0.14),
            tissue_density: (0.92, 1.07),
            bone_count: (1, 3),
            bone_axis: (0.025, 0.07),
            metal_count: (1, 3),
            metal_axis: (0.012, 0.04),
            metal_min_axis_px: 1.5,
            metal_density: (0.8, 1.0),
            insert_radius: 0.7,
            supersample: 2,
        }
    }
}

/// Deterministic phantom generator. Each `(seed, stream)` pair yields an
/// independent phantom.
#[derive(Clone, Debug)]
pub struct PhantomGenerator {
    pub config: PhantomConfig,
    pub size: usize,
    /// Water and bone attenuation at the effective energy, mm⁻¹.
    pub mu_water: f64,
    pub mu_bone: f64,
}

struct Layout {
    body: Ellipse,
    tissue: Vec<(Ellipse, f64)>,
    bone: Vec<Ellipse>,
    metal: Vec<(Ellipse, f64)>,
}

impl PhantomGenerator {
    pub fn new(size: usize, mu_water: f64, mu_bone: f64) -> Self {
        PhantomGenerator {
            config: PhantomConfig::default(),
            size,
            mu_water,
            mu_bone,
        }
    }

    fn layout(&self, rng: &mut ChaCha8Rng) -> Layout {
        let cfg = &self.config;
        let n = self.size as f64;
        let c = (n - 1.0) / 2.0;
        let span = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| rng.random_range(lo..=hi);
        let count = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| rng.random_range(lo..=hi);

        let body = Ellipse {
            cx: c + span(rng, (-cfg.body_offset, cfg.body_offset)) * n,
            cy: c + span(rng, (-cfg.body_offset, cfg.body_offset)) * n,
            a: span(rng, cfg.body_a) * n,
            b: span(rng, cfg.body_b) * n,
            angle: span(rng, (-cfg.body_tilt, cfg.body_tilt)),
        };
        let insert = |rng: &mut ChaCha8Rng, axis: (f64, f64), min_px: f64| {
            let r = cfg.insert_radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let (cx, cy) = body.point_at(r, phi);
            Ellipse {
                cx,
                cy,
                a: (span(rng, axis) * n).max(min_px),
                b: (span(rng, axis) * n).max(min_px),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            }
        };

        let n_tissue = count(rng, cfg.tissue_count);
        let tissue = (0..n_tissue)
            .map(|_| {
                let e = insert(rng, cfg.tissue_axis, 1.0);
                (e, span(rng, cfg.tissue_density))
            })
            .collect();
        let n_bone = count(rng, cfg.bone_count);
        let bone = (0..n_bone).map(|_| insert(rng, cfg.bone_axis, 1.0)).collect();
        let n_metal = count(rng, cfg.metal_count);
        let metal = (0..n_metal)
            .map(|_| {
                let e = insert(rng, cfg.metal_axis, cfg.metal_min_axis_px);
                (e, span(rng, cfg.metal_density))
            })
            .collect();
        Layout { body, tissue, bone, metal }
    }

    /// Relative density at a point, and whether only the body covers it.
    fn density_at(&self, layout: &Layout, x: f64, y: f64) -> (f64, bool) {
        if !layout.body.contains(x, y) {
            return (0.0, false);
        }
        let mut mu = self.mu_water;
        let mut plain = true;
        for (e, d) in &layout.tissue {
            if e.contains(x, y) {
                mu = self.mu_water * d;
                plain = false;
            }
        }
        for e in &layout.bone {
            if e.contains(x, y) {
                mu = self.mu_bone;
                plain = false;
            }
        }
        (mu, plain)
    }

    /// Phantom for `seed`. Different `stream` values give unrelated phantoms
    /// from the same seed.
    pub fn generate(&self, seed: u64, stream: u64) -> PhantomCase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let layout = self.layout(&mut rng);
        let n = self.size;
        let ss = self.config.supersample.max(1);
        let mut x_ac = Tensor::zeros(Shape::plane(n, n));
        let mut water_bits = vec![false; n * n];
        let mut density = Tensor::zeros(Shape::plane(n, n));
        let mut metal_bits = vec![false; n * n];
        let mut hits = vec![0usize; layout.metal.len()];
        for row in 0..n {
            for col in 0..n {
                let mut acc = 0.0;
                let mut all_plain = true;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let x = col as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let y = row as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let (mu, plain) = self.density_at(&layout, x, y);
                        acc += mu;
                        all_plain &= plain;
                    }
                }
                let k = row * n + col;
                x_ac.data_mut()[k] = (acc / (ss * ss) as f64) as f32;
                water_bits[k] = all_plain;
                for ((e, d), hit) in layout.metal.iter().zip(&mut hits) {
                    if e.contains(col as f64, row as f64) {
                        metal_bits[k] = true;
                        density.data_mut()[k] = *d as f32;
                        *hit += 1;
                    }
                }
            }
        }
        // Tiny inserts can miss every pixel centre; plant their centre pixel.
        for ((e, d), _) in layout.metal.iter().zip(&hits).filter(|(_, &h)| h == 0) {
            let (row, col) = (e.cy.round() as usize, e.cx.round() as usize);
            if row < n && col < n {
                metal_bits[row * n + col] = true;
                density.data_mut()[row * n + col] = *d as f32;
            }
        }
        let mask = Mask::from_bits(n, n, metal_bits).expect("mask size matches");
        let water = Mask::from_bits(n, n, water_bits).expect("mask size matches");
        PhantomCase {
            x_ac,
            mask,
            metal_density: density,
            water,
        }
    }

    /// Metal mask alone, as drawn for `seed`.
    pub fn metal_mask(&self, seed: u64, stream: u64) -> Mask {
        self.generate(seed, stream).mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(n: usize) -> PhantomGenerator {
        PhantomGenerator::new(n, 0.02, 0.036)
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_stream() {
        let g = gen(64);
        let a = g.generate(3, 0);
        let b = g.generate(3, 0);
        assert_eq!(a.x_ac, b.x_ac);
        assert_eq!(a.mask, b.mask);
        let c = g.generate(3, 1);
        assert_ne!(a.x_ac, c.x_ac);
    }

    #[test]
    fn metal_lies_inside_density_support_and_phantom_inside_circle() {
        let g = gen(128);
        for seed in 0..10 {
            let p = g.generate(seed, 0);
            assert!(!p.mask.is_empty());
            let c = 63.5;
            for row in 0..128 {
                for col in 0..128 {
                    let k = row * 128 + col;
                    if p.mask.get(row, col) {
                        assert!(p.metal_density.data()[k] > 0.0);
                    } else {
                        assert_eq!(p.metal_density.data()[k], 0.0);
                    }
                    let r = ((row as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
                    if r > 64.0 {
                        assert_eq!(p.x_ac.data()[k], 0.0);
                    }
                }
            }
            assert!(p.x_ac.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn water_region_holds_water() {
        let p = gen(128).generate(11, 0);
        assert!(p.water.count() > 1000);
        for (k, &w) in p.water.bits().iter().enumerate() {
            if w {
                assert!((p.x_ac.data()[k] - 0.02).abs() < 1e-7);
            }
        }
    }
}
