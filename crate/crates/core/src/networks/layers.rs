use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Bindings, Graph, ParamStore, Shape, Tensor, Var};

/// Negative slope of every leaky-ReLU in the networks.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Seeded parameter factory. Weights are uniform in `±1/√fan_in`, biases
/// start at zero. Creation order fixes the draw order, so a network built
/// from the same seed always gets the same values.
#[derive(Debug)]
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Initializer { rng }
    }

    /// Adds `<name>.w` of shape `(out, in, k, k)` and `<name>.b`.
    pub fn conv(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        zero: bool,
    ) -> Result<()> {
        let shape = Shape::new(c_out, c_in, k, k);
        let weight = if zero {
            Tensor::zeros(shape)
        } else {
            let bound = 1.0 / ((c_in * k * k) as f32).sqrt();
            let data = (0..shape.numel())
                .map(|_| self.rng.random_range(-bound..bound))
                .collect();
            Tensor::from_vec(shape, data)?
        };
        store.insert(format!("{name}.w"), weight)?;
        store.insert(format!("{name}.b"), Tensor::zeros(Shape::new(1, c_out, 1, 1)))
    }
}

/// Convolution using the parameters `<name>.w` / `<name>.b`; kernel size
/// comes from the weight shape.
pub fn conv(g: &mut Graph, b: &Bindings, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = b.get(&format!("{name}.w"))?;
    let bias = b.get(&format!("{name}.b"))?;
    g.conv2d(x, w, bias, stride, pad)
}

pub fn conv_leaky(g: &mut Graph, b: &Bindings, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let y = conv(g, b, name, x, stride, pad)?;
    Ok(g.leaky_relu(y, LEAKY_SLOPE))
}

/// Max-pools each plane by `factor` (trailing partial blocks included).
pub fn max_pool(t: &Tensor, factor: usize) -> Tensor {
    let s = t.shape();
    let (oh, ow) = (s.h.div_ceil(factor), s.w.div_ceil(factor));
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = t.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in 0..s.h {
                for j in 0..s.w {
                    let o = &mut dst[(i / factor) * ow + j / factor];
                    *o = o.max(src[i * s.w + j]);
                }
            }
        }
    }
    out
}

/// Stacks per-sample single planes into one `(N, 1, H, W)` tensor.
pub fn stack_planes(planes: &[&Tensor]) -> Result<Tensor> {
    if planes.is_empty() {
        return Err(Error::invalid("cannot stack an empty batch"));
    }
    Tensor::stack(planes)
}
