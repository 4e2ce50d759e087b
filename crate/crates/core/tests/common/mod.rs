#![allow(dead_code)]

use marforge_core::{Graph, Result, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, lo: f32, hi: f32, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let data = (0..shape.numel()).map(|_| r.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Outcome of a central finite-difference comparison.
#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn pass_fraction(&self) -> f64 {
        self.passed as f64 / self.checked as f64
    }

    pub fn passes(&self, fraction: f64) -> bool {
        self.pass_fraction() >= fraction
    }
}

/// Compares autodiff gradients against central differences with step `eps`.
///
/// `f` maps the input to an output tensor `y`. The scalar under test is
/// `Σ rᵢ yᵢ` for a fixed random `r`; the analytic side backpropagates it
/// through the graph, while the numeric side forms the sum in f64 from the
/// f32 outputs so that rounding of the scalar itself does not swamp the
/// difference quotient.
///
/// A coordinate passes when `|analytic - numeric| <= rel_tol * scale`, where
/// `scale` is the larger of the two magnitudes, floored at `1e-3` times the
/// largest gradient entry so that coordinates with a vanishing gradient are
/// judged on an absolute scale. At most `max_coords` evenly strided
/// coordinates are probed.
pub fn finite_difference_check<F>(
    input: &Tensor,
    eps: f32,
    rel_tol: f64,
    max_coords: usize,
    f: F,
) -> GradCheck
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(input.clone(), true);
    let y = f(&mut g, x).unwrap();
    let weights = random_tensor(g.shape(y), -1.0, 1.0, 0x5eed);
    let r = g.constant(weights.clone());
    let p = g.mul(y, r).unwrap();
    let loss = g.sum(p);
    g.backward(loss).unwrap();
    let analytic = g.grad(x).expect("input received no gradient").clone();
    let gmax = analytic.max_abs() as f64;

    let eval = |t: Tensor| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(t, false);
        let y = f(&mut g, x).unwrap();
        g.value(y)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    };

    let n = input.numel();
    let stride = n.div_ceil(max_coords).max(1);
    let mut checked = 0;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for i in (0..n).step_by(stride) {
        let mut plus = input.clone();
        plus.data_mut()[i] += eps;
        let mut minus = input.clone();
        minus.data_mut()[i] -= eps;
        let step = plus.data()[i] as f64 - minus.data()[i] as f64;
        let numeric = (eval(plus) - eval(minus)) / step;
        let a = analytic.data()[i] as f64;
        let scale = a.abs().max(numeric.abs()).max(1e-3 * gmax).max(1e-12);
        let rel = (a - numeric).abs() / scale;
        worst = worst.max(rel);
        checked += 1;
        if rel <= rel_tol {
            passed += 1;
        }
    }
    GradCheck { checked, passed, worst }
}

/// Overwrites every parameter (including zero-initialized output layers) with
/// uniform values in `±scale`.
pub fn randomize_params(store: &mut marforge_core::ParamStore, scale: f32, seed: u64) {
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for (i, name) in names.iter().enumerate() {
        let p = store.get_mut(name).unwrap();
        let fresh = random_tensor(p.shape(), -scale, scale, seed.wrapping_mul(1000).wrapping_add(i as u64));
        *p = fresh;
    }
}
