//! Convolution kernels: im2col lowering onto a single-precision GEMM.

use std::ops::Range;

use super::direct::{accumulate_conv, accumulate_input_grad, accumulate_weight_grad};
use super::value::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: Shape, weight: Shape, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be at least 1"));
        }
        if weight.h != weight.w {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square, got {}×{}", weight.h, weight.w),
            ));
        }
        if weight.c != x.c {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input channel dimension {} does not match weight in_ch {}",
                    x.c, weight.c
                ),
            ));
        }
        let k = weight.h;
        if x.h + 2 * pad < k || x.w + 2 * pad < k {
            return Err(Error::shape(
                "conv2d",
                format!("height/width {}×{} smaller than kernel {k}", x.h, x.w),
            ));
        }
        Ok(ConvGeom {
            c_in: x.c,
            c_out: weight.n,
            k,
            stride,
            pad,
            h: x.h,
            w: x.w,
            ho: (x.h + 2 * pad - k) / stride + 1,
            wo: (x.w + 2 * pad - k) / stride + 1,
        })
    }

    /// Stride-1 problems go through the direct kernels.
    fn is_direct(&self) -> bool {
        self.stride == 1 && self.pad < self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

}

/// Output rows per im2col block, chosen so that a block of the column
/// matrix stays cache-resident.
fn block_rows(g: &ConvGeom) -> usize {
    const TARGET_FLOATS: usize = 96 * 1024;
    (TARGET_FLOATS / (g.col_rows() * g.wo).max(1)).clamp(1, g.ho)
}

/// Column matrix for output rows `rows`; column `(oy − rows.start) · wo + ox`.
fn im2col(g: &ConvGeom, x: &[f32], rows: Range<usize>, cols: &mut [f32]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let ncol = rows.len() * g.wo;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for (ly, oy) in rows.clone().enumerate() {
                    let iy = (oy * s + ki) as isize - p;
                    let out_row = &mut dst[ly * g.wo..(ly + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
                        *o = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f32], rows: Range<usize>, dx: &mut [f32]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let ncol = rows.len() * g.wo;
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for (ly, oy) in rows.clone().enumerate() {
                    let iy = (oy * s + ki) as isize - p;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let in_row = &src[ly * g.wo..(ly + 1) * g.wo];
                    for (ox, &v) in in_row.iter().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Row and column strides of a matrix operand.
#[derive(Clone, Copy)]
struct Layout {
    rs: isize,
    cs: isize,
}

impl Layout {
    fn rows(stride: usize) -> Self {
        Layout { rs: stride as isize, cs: 1 }
    }

    fn cols(stride: usize) -> Self {
        Layout { rs: 1, cs: stride as isize }
    }

    /// Largest linear index touched by an `r × c` matrix.
    fn extent(&self, r: usize, c: usize) -> usize {
        (r as isize - 1).max(0) as usize * self.rs as usize + (c as isize - 1).max(0) as usize * self.cs as usize + 1
    }
}

/// `c = a · b + beta · c` for an `m × k` by `k × n` product on strided slices.
#[allow(clippy::too_many_arguments)]
fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    la: Layout,
    b: &[f32],
    lb: Layout,
    c: &mut [f32],
    lc: Layout,
    beta: f32,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= la.extent(m, k) && b.len() >= lb.extent(k, n) && c.len() >= lc.extent(m, n));
    // SAFETY: the assertion bounds every element addressed through these
    // strides inside the three slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rs,
            la.cs,
            b.as_ptr(),
            lb.rs,
            lb.cs,
            beta,
            c.as_mut_ptr(),
            lc.rs,
            lc.cs,
        );
    }
}

/// Cross-correlation of `x` with `weight` (no kernel flip), zero padding.
///
/// Weight layout is `(out_ch, in_ch, k, k)`, bias is `(1, out_ch, 1, 1)`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = ConvGeom::new(x.shape(), weight.shape(), stride, pad)?;
    if bias.numel() != g.c_out {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {} output channels", bias.numel(), g.c_out),
        ));
    }
    let n = x.shape().n;
    let mut out = Tensor::zeros(Shape::new(n, g.c_out, g.ho, g.wo));
    let in_len = g.c_in * g.h * g.w;
    let out_plane = g.ho * g.wo;
    let out_len = g.c_out * out_plane;
    let step = block_rows(&g);
    let mut cols = vec![0.0; if g.is_pointwise() || g.is_direct() { 0 } else { g.col_rows() * step * g.wo }];
    for b in 0..n {
        let xs = &x.data()[b * in_len..(b + 1) * in_len];
        let ys = &mut out.data_mut()[b * out_len..(b + 1) * out_len];
        for (co, chunk) in ys.chunks_mut(out_plane).enumerate() {
            chunk.fill(bias.data()[co]);
        }
        if g.is_direct() {
            accumulate_conv(xs, (g.c_in, g.h, g.w), weight.data(), g.c_out, g.k, g.pad, ys);
            continue;
        }
        if g.is_pointwise() {
            gemm_strided(
                g.c_out,
                g.c_in,
                out_plane,
                weight.data(),
                Layout::rows(g.c_in),
                xs,
                Layout::rows(out_plane),
                ys,
                Layout::rows(out_plane),
                1.0,
            );
            continue;
        }
        for oy in (0..g.ho).step_by(step) {
            let rows = oy..(oy + step).min(g.ho);
            let ncol = rows.len() * g.wo;
            im2col(&g, xs, rows, &mut cols);
            gemm_strided(
                g.c_out,
                g.col_rows(),
                ncol,
                weight.data(),
                Layout::rows(g.col_rows()),
                &cols,
                Layout::rows(ncol),
                &mut ys[oy * g.wo..],
                Layout::rows(out_plane),
                1.0,
            );
        }
    }
    Ok(out)
}

/// Gradients of a convolution. Any of the outputs can be skipped.
pub(crate) struct ConvGrads<'a> {
    pub dx: Option<&'a mut [f32]>,
    pub dw: Option<&'a mut [f32]>,
    pub db: Option<&'a mut [f32]>,
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dy: &[f32],
    stride: usize,
    pad: usize,
    grads: ConvGrads<'_>,
) -> Result<()> {
    let g = ConvGeom::new(x.shape(), weight.shape(), stride, pad)?;
    let n = x.shape().n;
    let in_len = g.c_in * g.h * g.w;
    let out_plane = g.ho * g.wo;
    let out_len = g.c_out * out_plane;
    let ConvGrads {
        mut dx,
        mut dw,
        mut db,
    } = grads;
    let step = if g.is_pointwise() { g.ho } else { block_rows(&g) };
    let block = if g.is_pointwise() || g.is_direct() { 0 } else { g.col_rows() * step * g.wo };
    let mut cols = vec![0.0; block];
    let mut dcols = vec![0.0; if dx.is_some() { block } else { 0 }];
    let kr = g.col_rows();
    for b in 0..n {
        let dys = &dy[b * out_len..(b + 1) * out_len];
        let xs = &x.data()[b * in_len..(b + 1) * in_len];
        if let Some(db) = db.as_deref_mut() {
            for (co, chunk) in dys.chunks(out_plane).enumerate() {
                db[co] += chunk.iter().sum::<f32>();
            }
        }
        if g.is_direct() {
            let dims = (g.c_in, g.h, g.w);
            if let Some(dw) = dw.as_deref_mut() {
                accumulate_weight_grad(xs, dims, dys, g.c_out, g.k, g.pad, dw);
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxs = &mut dx[b * in_len..(b + 1) * in_len];
                accumulate_input_grad(dys, dims, weight.data(), g.c_out, g.k, g.pad, dxs);
            }
            continue;
        }
        for oy in (0..g.ho).step_by(step) {
            let rows = oy..(oy + step).min(g.ho);
            let ncol = rows.len() * g.wo;
            let p0 = oy * g.wo;
            let dy_block = &dys[p0..];
            if let Some(dw) = dw.as_deref_mut() {
                let (src, ls): (&[f32], Layout) = if g.is_pointwise() {
                    (&xs[p0..], Layout::cols(out_plane))
                } else {
                    im2col(&g, xs, rows.clone(), &mut cols);
                    (&cols, Layout::cols(ncol))
                };
                gemm_strided(
                    g.c_out,
                    ncol,
                    kr,
                    dy_block,
                    Layout::rows(out_plane),
                    src,
                    ls,
                    dw,
                    Layout::rows(kr),
                    1.0,
                );
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxs = &mut dx[b * in_len..(b + 1) * in_len];
                if g.is_pointwise() {
                    gemm_strided(
                        kr,
                        g.c_out,
                        ncol,
                        weight.data(),
                        Layout::cols(kr),
                        dy_block,
                        Layout::rows(out_plane),
                        &mut dxs[p0..],
                        Layout::rows(g.h * g.w),
                        1.0,
                    );
                } else {
                    gemm_strided(
                        kr,
                        g.c_out,
                        ncol,
                        weight.data(),
                        Layout::cols(kr),
                        dy_block,
                        Layout::rows(out_plane),
                        &mut dcols,
                        Layout::rows(ncol),
                        0.0,
                    );
                    col2im(&g, &dcols, rows, dxs);
                }
            }
        }
    }
    Ok(())
}
