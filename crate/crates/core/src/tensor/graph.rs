use std::fmt;
use std::sync::Arc;

use super::conv::{conv2d_backward, conv2d_forward, ConvGrads};
use super::filter::{sobel_adjoint, sobel_components, GaussianBlur};
use super::value::{Shape, Tensor};
use crate::error::{Error, Result};

/// A fixed linear map between two planes, applied independently to every
/// `(n, c)` plane of a tensor. Its adjoint is used for backpropagation, so the
/// pair must satisfy `⟨A x, y⟩ = ⟨x, Aᵀ y⟩`.
pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// `(height, width)` of the input plane.
    fn input_dims(&self) -> (usize, usize);
    /// `(height, width)` of the output plane.
    fn output_dims(&self) -> (usize, usize);
    /// Overwrites `y` with `A x`.
    fn apply(&self, x: &[f32], y: &mut [f32]);
    /// Overwrites `x` with `Aᵀ y`.
    fn apply_adjoint(&self, y: &[f32], x: &mut [f32]);
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f32),
    LeakyRelu(usize, f32),
    Clamp(usize, f32, f32),
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
    },
    Upsample(usize, usize),
    Concat(Vec<usize>),
    PadReplicate {
        x: usize,
        top: usize,
        left: usize,
    },
    Crop {
        x: usize,
        top: usize,
        left: usize,
    },
    Linear(usize, Arc<dyn LinearOperator>),
    Blur(usize, GaussianBlur),
    Sobel(usize),
    Sum(usize),
    WeightedAbs(usize, Option<Tensor>, f64),
    WeightedSquare(usize, Option<Tensor>, f64),
    BceLogits(usize, f32),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Tape of tensor operations.
///
/// Every method that creates a node evaluates it eagerly; [`Graph::backward`]
/// then propagates gradients from a scalar node to every leaf created with
/// `requires_grad`. Leaf gradients accumulate across repeated backward calls
/// until [`Graph::zero_grad`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copy of `v`'s value cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v.0)
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str) -> Result<(Shape, bool)> {
        let sa = self.shape(a);
        self.nodes[b.0].value.expect_shape(sa, name)?;
        Ok((sa, self.rg(a.0) || self.rg(b.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, rg) = self.binary(a, b, "add")?;
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, rg) = self.binary(a, b, "sub")?;
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, rg) = self.binary(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let v = self.value(a).scale(s);
        let rg = self.rg(a.0);
        self.push(v, Op::Scale(a.0, s), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f32) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a.0);
        self.push(v, Op::LeakyRelu(a.0, slope), rg)
    }

    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a.0);
        self.push(v, Op::Clamp(a.0, lo, hi), rg)
    }

    /// 2-D cross-correlation with zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let v = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let rg = self.rg(x.0) || self.rg(w.0) || self.rg(b.0);
        Ok(self.push(
            v,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                stride,
                pad,
            },
            rg,
        ))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor < 1 {
            return Err(Error::invalid("upsample factor must be at least 1"));
        }
        let s = self.shape(x);
        let os = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
        let mut out = Tensor::zeros(os);
        let src = self.value(x);
        for p in 0..s.n * s.c {
            let ip = &src.data()[p * s.plane_len()..(p + 1) * s.plane_len()];
            let op = &mut out.data_mut()[p * os.plane_len()..(p + 1) * os.plane_len()];
            for i in 0..os.h {
                for j in 0..os.w {
                    op[i * os.w + j] = ip[(i / factor) * s.w + j / factor];
                }
            }
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::Upsample(x.0, factor), rg))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.shape(*xs.first().ok_or_else(|| Error::invalid("concat of nothing"))?);
        let mut c_total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.n != first.n || s.h != first.h || s.w != first.w {
                let which = if s.n != first.n {
                    "batch"
                } else if s.h != first.h {
                    "height"
                } else {
                    "width"
                };
                return Err(Error::shape(
                    "concat",
                    format!("{which} dimension differs: {s} vs {first}"),
                ));
            }
            c_total += s.c;
        }
        let os = Shape::new(first.n, c_total, first.h, first.w);
        let mut data = Vec::with_capacity(os.numel());
        for n in 0..first.n {
            for &x in xs {
                let t = self.value(x);
                let per = t.shape().c * t.shape().plane_len();
                data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
            }
        }
        let rg = xs.iter().any(|x| self.rg(x.0));
        let out = Tensor::from_vec(os, data)?;
        Ok(self.push(out, Op::Concat(xs.iter().map(|x| x.0).collect()), rg))
    }

    /// Replicate (edge) padding of the spatial axes.
    pub fn pad_replicate(
        &mut self,
        x: Var,
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    ) -> Var {
        let s = self.shape(x);
        let os = Shape::new(s.n, s.c, s.h + top + bottom, s.w + left + right);
        let mut out = Tensor::zeros(os);
        let src = self.value(x);
        for p in 0..s.n * s.c {
            let ip = &src.data()[p * s.plane_len()..(p + 1) * s.plane_len()];
            let op = &mut out.data_mut()[p * os.plane_len()..(p + 1) * os.plane_len()];
            for i in 0..os.h {
                let si = (i as isize - top as isize).clamp(0, s.h as isize - 1) as usize;
                for j in 0..os.w {
                    let sj = (j as isize - left as isize).clamp(0, s.w as isize - 1) as usize;
                    op[i * os.w + j] = ip[si * s.w + sj];
                }
            }
        }
        let rg = self.rg(x.0);
        self.push(out, Op::PadReplicate { x: x.0, top, left }, rg)
    }

    /// Spatial crop of an `h × w` window starting at `(top, left)`.
    pub fn crop(&mut self, x: Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        let s = self.shape(x);
        if top + h > s.h || left + w > s.w {
            return Err(Error::shape(
                "crop",
                format!("window {h}×{w} at ({top}, {left}) exceeds {s}"),
            ));
        }
        let os = Shape::new(s.n, s.c, h, w);
        let mut out = Tensor::zeros(os);
        let src = self.value(x);
        for p in 0..s.n * s.c {
            let ip = &src.data()[p * s.plane_len()..(p + 1) * s.plane_len()];
            let op = &mut out.data_mut()[p * os.plane_len()..(p + 1) * os.plane_len()];
            for i in 0..h {
                op[i * w..(i + 1) * w]
                    .copy_from_slice(&ip[(top + i) * s.w + left..(top + i) * s.w + left + w]);
            }
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::Crop { x: x.0, top, left }, rg))
    }

    /// Applies a linear operator plane by plane.
    pub fn linear(&mut self, x: Var, op: Arc<dyn LinearOperator>) -> Result<Var> {
        let s = self.shape(x);
        let (ih, iw) = op.input_dims();
        if (s.h, s.w) != (ih, iw) {
            let which = if s.h != ih { "height" } else { "width" };
            return Err(Error::shape(
                op.name(),
                format!("{which} dimension differs: input {}×{}, operator expects {ih}×{iw}", s.h, s.w),
            ));
        }
        let (oh, ow) = op.output_dims();
        let os = Shape::new(s.n, s.c, oh, ow);
        let mut out = Tensor::zeros(os);
        let src = self.value(x);
        for p in 0..s.n * s.c {
            op.apply(
                &src.data()[p * s.plane_len()..(p + 1) * s.plane_len()],
                &mut out.data_mut()[p * os.plane_len()..(p + 1) * os.plane_len()],
            );
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::Linear(x.0, op), rg))
    }

    /// Separable Gaussian blur, kernel radius `ceil(3σ)`, replicate padding.
    pub fn gaussian_blur(&mut self, x: Var, sigma: f32) -> Result<Var> {
        let blur = GaussianBlur::new(sigma)?;
        let s = self.shape(x);
        let mut out = Tensor::zeros(s);
        let src = self.value(x);
        for p in 0..s.n * s.c {
            let r = p * s.plane_len()..(p + 1) * s.plane_len();
            blur.apply(&src.data()[r.clone()], s.h, s.w, &mut out.data_mut()[r]);
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::Blur(x.0, blur), rg))
    }

    /// Sobel gradient magnitude `sqrt(Gx² + Gy²)` of a single-channel tensor.
    pub fn sobel_gradient(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.c != 1 {
            return Err(Error::shape(
                "sobel_gradient",
                format!("channel dimension must be 1, got {}", s.c),
            ));
        }
        let mut out = Tensor::zeros(s);
        let src = self.value(x);
        for p in 0..s.n {
            let r = p * s.plane_len()..(p + 1) * s.plane_len();
            let (gx, gy) = sobel_components(&src.data()[r.clone()], s.h, s.w);
            for (o, (a, b)) in out.data_mut()[r].iter_mut().zip(gx.iter().zip(&gy)) {
                *o = (a * a + b * b).sqrt();
            }
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::Sobel(x.0), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum() as f32);
        let rg = self.rg(x.0);
        self.push(v, Op::Sum(x.0), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f32;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    fn check_weights(&self, x: Var, weights: Option<&Tensor>, op: &'static str) -> Result<f64> {
        match weights {
            None => Ok(self.value(x).numel() as f64),
            Some(w) => {
                w.expect_shape(self.shape(x), op)?;
                let total = w.sum();
                if total <= 0.0 {
                    return Err(Error::invalid(format!("{op}: weights sum to zero")));
                }
                Ok(total)
            }
        }
    }

    /// `Σ wᵢ |xᵢ| / Σ wᵢ`, or the plain mean absolute value without weights.
    pub fn mean_abs(&mut self, x: Var, weights: Option<&Tensor>) -> Result<Var> {
        let norm = self.check_weights(x, weights, "mean_abs")?;
        let xs = self.value(x).data();
        let total: f64 = match weights {
            None => xs.iter().map(|&v| v.abs() as f64).sum(),
            Some(w) => xs
                .iter()
                .zip(w.data())
                .map(|(&v, &wt)| (v.abs() * wt) as f64)
                .sum(),
        };
        let rg = self.rg(x.0);
        Ok(self.push(
            Tensor::scalar((total / norm) as f32),
            Op::WeightedAbs(x.0, weights.cloned(), norm),
            rg,
        ))
    }

    /// `Σ wᵢ xᵢ² / Σ wᵢ`, or the plain mean square without weights.
    pub fn mean_square(&mut self, x: Var, weights: Option<&Tensor>) -> Result<Var> {
        let norm = self.check_weights(x, weights, "mean_square")?;
        let xs = self.value(x).data();
        let total: f64 = match weights {
            None => xs.iter().map(|&v| (v * v) as f64).sum(),
            Some(w) => xs
                .iter()
                .zip(w.data())
                .map(|(&v, &wt)| (v * v * wt) as f64)
                .sum(),
        };
        let rg = self.rg(x.0);
        Ok(self.push(
            Tensor::scalar((total / norm) as f32),
            Op::WeightedSquare(x.0, weights.cloned(), norm),
            rg,
        ))
    }

    /// Mean binary cross-entropy of logits against a constant target.
    pub fn bce_with_logits(&mut self, logits: Var, target: f32) -> Var {
        let xs = self.value(logits).data();
        let total: f64 = xs
            .iter()
            .map(|&x| {
                let x = x as f64;
                x.max(0.0) - x * target as f64 + (-x.abs()).exp().ln_1p()
            })
            .sum();
        let v = Tensor::scalar((total / xs.len() as f64) as f32);
        let rg = self.rg(logits.0);
        self.push(v, Op::BceLogits(logits.0, target), rg)
    }

    /// Reverse-mode sweep from a `(1, 1, 1, 1)` node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if s != Shape::scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar (1, 1, 1, 1), got {s}"),
            ));
        }
        if !self.rg(loss.0) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut acc = |j: usize, f: &dyn Fn(&mut [f32])| {
                if !nodes[j].requires_grad {
                    return;
                }
                let slot = grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.numel()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::Add(a, b) => {
                    acc(*a, &|d| add_into(d, &g));
                    acc(*b, &|d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|d| add_into(d, &g));
                    acc(*b, &|d| {
                        for (d, g) in d.iter_mut().zip(&g) {
                            *d -= g;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
                    acc(*a, &|d| {
                        for ((d, g), y) in d.iter_mut().zip(&g).zip(vb) {
                            *d += g * y;
                        }
                    });
                    acc(*b, &|d| {
                        for ((d, g), x) in d.iter_mut().zip(&g).zip(va) {
                            *d += g * x;
                        }
                    });
                }
                Op::Scale(a, s) => acc(*a, &|d| {
                    for (d, g) in d.iter_mut().zip(&g) {
                        *d += s * g;
                    }
                }),
                Op::LeakyRelu(a, slope) => {
                    let xs = nodes[*a].value.data();
                    acc(*a, &|d| {
                        for ((d, g), &x) in d.iter_mut().zip(&g).zip(xs) {
                            *d += if x > 0.0 { *g } else { slope * g };
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let xs = nodes[*a].value.data();
                    acc(*a, &|d| {
                        for ((d, g), &x) in d.iter_mut().zip(&g).zip(xs) {
                            if x >= *lo && x <= *hi {
                                *d += g;
                            }
                        }
                    });
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
                    let mut dx = nodes[*x].requires_grad.then(|| vec![0.0; xv.numel()]);
                    let mut dw = nodes[*w].requires_grad.then(|| vec![0.0; wv.numel()]);
                    let mut db = nodes[*b]
                        .requires_grad
                        .then(|| vec![0.0; nodes[*b].value.numel()]);
                    conv2d_backward(
                        xv,
                        wv,
                        &g,
                        *stride,
                        *pad,
                        ConvGrads {
                            dx: dx.as_deref_mut(),
                            dw: dw.as_deref_mut(),
                            db: db.as_deref_mut(),
                        },
                    )?;
                    if let Some(dx) = dx {
                        acc(*x, &|d| add_into(d, &dx));
                    }
                    if let Some(dw) = dw {
                        acc(*w, &|d| add_into(d, &dw));
                    }
                    if let Some(db) = db {
                        acc(*b, &|d| add_into(d, &db));
                    }
                }
                Op::Upsample(a, f) => {
                    let s = nodes[*a].value.shape();
                    let os = node.value.shape();
                    acc(*a, &|d| {
                        for p in 0..s.n * s.c {
                            let gp = &g[p * os.plane_len()..(p + 1) * os.plane_len()];
                            let dp = &mut d[p * s.plane_len()..(p + 1) * s.plane_len()];
                            for i in 0..os.h {
                                for j in 0..os.w {
                                    dp[(i / f) * s.w + j / f] += gp[i * os.w + j];
                                }
                            }
                        }
                    });
                }
                Op::Concat(parts) => {
                    let os = node.value.shape();
                    let mut offset = 0;
                    for &p in parts {
                        let ps = nodes[p].value.shape();
                        let per = ps.c * ps.plane_len();
                        let off = offset;
                        acc(p, &|d| {
                            for n in 0..os.n {
                                let src = n * os.c * os.plane_len() + off * os.plane_len();
                                add_into(&mut d[n * per..(n + 1) * per], &g[src..src + per]);
                            }
                        });
                        offset += ps.c;
                    }
                }
                Op::PadReplicate { x, top, left } => {
                    let s = nodes[*x].value.shape();
                    let os = node.value.shape();
                    acc(*x, &|d| {
                        for p in 0..s.n * s.c {
                            let gp = &g[p * os.plane_len()..(p + 1) * os.plane_len()];
                            let dp = &mut d[p * s.plane_len()..(p + 1) * s.plane_len()];
                            for i in 0..os.h {
                                let si = (i as isize - *top as isize).clamp(0, s.h as isize - 1)
                                    as usize;
                                for j in 0..os.w {
                                    let sj = (j as isize - *left as isize)
                                        .clamp(0, s.w as isize - 1)
                                        as usize;
                                    dp[si * s.w + sj] += gp[i * os.w + j];
                                }
                            }
                        }
                    });
                }
                Op::Crop { x, top, left } => {
                    let s = nodes[*x].value.shape();
                    let os = node.value.shape();
                    acc(*x, &|d| {
                        for p in 0..s.n * s.c {
                            let gp = &g[p * os.plane_len()..(p + 1) * os.plane_len()];
                            let dp = &mut d[p * s.plane_len()..(p + 1) * s.plane_len()];
                            for i in 0..os.h {
                                let row = (top + i) * s.w + left;
                                add_into(&mut dp[row..row + os.w], &gp[i * os.w..(i + 1) * os.w]);
                            }
                        }
                    });
                }
                Op::Linear(x, op) => {
                    let s = nodes[*x].value.shape();
                    let os = node.value.shape();
                    acc(*x, &|d| {
                        let mut tmp = vec![0.0; s.plane_len()];
                        for p in 0..s.n * s.c {
                            op.apply_adjoint(&g[p * os.plane_len()..(p + 1) * os.plane_len()], &mut tmp);
                            add_into(&mut d[p * s.plane_len()..(p + 1) * s.plane_len()], &tmp);
                        }
                    });
                }
                Op::Blur(x, blur) => {
                    let s = nodes[*x].value.shape();
                    acc(*x, &|d| {
                        for p in 0..s.n * s.c {
                            let r = p * s.plane_len()..(p + 1) * s.plane_len();
                            blur.apply_adjoint(&g[r.clone()], s.h, s.w, &mut d[r]);
                        }
                    });
                }
                Op::Sobel(x) => {
                    let s = nodes[*x].value.shape();
                    let xv = nodes[*x].value.data();
                    let mag = node.value.data();
                    acc(*x, &|d| {
                        for p in 0..s.n {
                            let r = p * s.plane_len()..(p + 1) * s.plane_len();
                            let (gx, gy) = sobel_components(&xv[r.clone()], s.h, s.w);
                            let mut dgx = vec![0.0; s.plane_len()];
                            let mut dgy = vec![0.0; s.plane_len()];
                            for k in 0..s.plane_len() {
                                let m = mag[r.start + k];
                                if m > 0.0 {
                                    dgx[k] = g[r.start + k] * gx[k] / m;
                                    dgy[k] = g[r.start + k] * gy[k] / m;
                                }
                            }
                            sobel_adjoint(&dgx, &dgy, s.h, s.w, &mut d[r]);
                        }
                    });
                }
                Op::Sum(x) => acc(*x, &|d| {
                    for d in d.iter_mut() {
                        *d += g[0];
                    }
                }),
                Op::WeightedAbs(x, w, norm) => {
                    let xs = nodes[*x].value.data();
                    let scale = g[0] / *norm as f32;
                    acc(*x, &|d| {
                        for (k, (d, &v)) in d.iter_mut().zip(xs).enumerate() {
                            let wt = w.as_ref().map_or(1.0, |w| w.data()[k]);
                            let sign = if v > 0.0 {
                                1.0
                            } else if v < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            *d += scale * wt * sign;
                        }
                    });
                }
                Op::WeightedSquare(x, w, norm) => {
                    let xs = nodes[*x].value.data();
                    let scale = 2.0 * g[0] / *norm as f32;
                    acc(*x, &|d| {
                        for (k, (d, &v)) in d.iter_mut().zip(xs).enumerate() {
                            let wt = w.as_ref().map_or(1.0, |w| w.data()[k]);
                            *d += scale * wt * v;
                        }
                    });
                }
                Op::BceLogits(x, target) => {
                    let xs = nodes[*x].value.data();
                    let scale = g[0] / xs.len() as f32;
                    acc(*x, &|d| {
                        for (d, &v) in d.iter_mut().zip(xs) {
                            let p = 1.0 / (1.0 + (-v).exp());
                            *d += scale * (p - target);
                        }
                    });
                }
            }
        }

        for (i, g) in leaf_grads {
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(t) => add_into(t.data_mut(), &g),
                None => node.grad = Some(Tensor::from_vec(node.value.shape(), g)?),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_plane(1, 3, vec![1.0, -2.0, 5.0]).unwrap(), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_analytic() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 4.0);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0), true);
        let y = g.scale(x, 2.0);
        g.backward(y).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 4.0);
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::plane(2, 2)), true);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn leaky_relu_definition() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_plane(1, 2, vec![-1.0, 2.0]).unwrap());
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[-0.2, 2.0]);
    }

    #[test]
    fn upsample_replicates_blocks() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_plane(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.upsample_nearest(x, 2).unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(g.value(y).data(), &expected);
        assert!(g.upsample_nearest(x, 0).is_err());
    }

    #[test]
    fn gradients_accumulate_over_multiple_uses() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.5), true);
        let a = g.scale(x, 3.0);
        let b = g.add(a, x).unwrap();
        g.backward(b).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 4.0);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(Shape::plane(4, 4)));
        let l = g.bce_with_logits(x, 1.0);
        assert!((g.value(l).item() - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn concat_mismatch_names_dimension() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(Shape::new(1, 1, 4, 4)));
        let b = g.constant(Tensor::zeros(Shape::new(1, 1, 4, 5)));
        let err = g.concat(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("width"));
    }
}
