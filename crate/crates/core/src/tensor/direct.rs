//! Direct stride-1 convolution for the small channel counts used here.
//!
//! The input is copied into zero-padded planes and the output is computed on
//! the padded row width, so every kernel tap becomes a fixed offset into the
//! padded plane. The inner loop is then a dense multiply-add over 16
//! consecutive output positions for a handful of output channels, which the
//! compiler vectorizes. On x86-64 a copy compiled for AVX2/FMA (or AVX-512)
//! is selected at run time.

const LANES: usize = 16;
const PIX_BLOCK: usize = 1024;

/// Zero-padded copies of `c` planes of `h × w`, laid out with row width
/// `wp = w + 2·pad` and enough slack after each plane for the widest read.
struct Padded {
    data: Vec<f32>,
    plane: usize,
    wp: usize,
}

fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

impl Padded {
    fn new(x: &[f32], c: usize, h: usize, w: usize, pad: usize, k: usize) -> Self {
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let plane = hp * wp + k + LANES;
        let mut data = vec![0.0; c * plane];
        for ci in 0..c {
            for y in 0..h {
                let src = &x[(ci * h + y) * w..(ci * h + y + 1) * w];
                let row = ci * plane + (y + pad) * wp + pad;
                data[row..row + w].copy_from_slice(src);
            }
        }
        Padded { data, plane, wp }
    }

    /// Offset of tap `(ci, ki, kj)` in the order of the weight layout.
    fn offsets(&self, c: usize, k: usize) -> Vec<usize> {
        let mut offs = Vec::with_capacity(c * k * k);
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    offs.push(ci * self.plane + ki * self.wp + kj);
                }
            }
        }
        offs
    }
}

/// Sizes of one stride-1 problem.
#[derive(Clone, Copy)]
struct Dims {
    c_out: usize,
    ho: usize,
    wo: usize,
    wp: usize,
    /// Output positions on the padded row width, rounded up to `LANES`.
    n: usize,
}

#[inline(always)]
fn forward_tile<const M: usize, F: Fn(f32, f32, f32) -> f32>(
    fma: &F,
    wt: &[f32],
    co: usize,
    offs: &[usize],
    xp: &[f32],
    range: (usize, usize),
    out: &mut [f32],
    n: usize,
) {
    let c_out = wt.len() / offs.len();
    let mut p = range.0;
    while p < range.1 {
        let mut acc = [[0.0f32; LANES]; M];
        for (r, &off) in offs.iter().enumerate() {
            let b: &[f32; LANES] = xp[off + p..off + p + LANES].try_into().expect("slack");
            let ws = &wt[r * c_out + co..r * c_out + co + M];
            for i in 0..M {
                for l in 0..LANES {
                    acc[i][l] = fma(ws[i], b[l], acc[i][l]);
                }
            }
        }
        for (i, a) in acc.iter().enumerate() {
            out[(co + i) * n + p..(co + i) * n + p + LANES].copy_from_slice(a);
        }
        p += LANES;
    }
}

#[inline(always)]
fn forward_body<F: Fn(f32, f32, f32) -> f32>(fma: F, d: Dims, wt: &[f32], offs: &[usize], xp: &[f32], out: &mut [f32]) {
    for p0 in (0..d.n).step_by(PIX_BLOCK) {
        let range = (p0, (p0 + PIX_BLOCK).min(d.n));
        let mut co = 0;
        while co < d.c_out {
            match d.c_out - co {
                1 => forward_tile::<1, _>(&fma, wt, co, offs, xp, range, out, d.n),
                2 => forward_tile::<2, _>(&fma, wt, co, offs, xp, range, out, d.n),
                3 => forward_tile::<3, _>(&fma, wt, co, offs, xp, range, out, d.n),
                _ => forward_tile::<4, _>(&fma, wt, co, offs, xp, range, out, d.n),
            }
            co += 4;
        }
    }
}

#[inline(always)]
fn wgrad_tile<const M: usize, const R: usize, F: Fn(f32, f32, f32) -> f32>(
    fma: &F,
    dyp: &[f32],
    co: usize,
    offs: &[usize],
    r0: usize,
    xp: &[f32],
    range: (usize, usize),
    n: usize,
    dw: &mut [f32],
) {
    let kdim = offs.len();
    let mut acc = [[[0.0f32; LANES]; M]; R];
    let mut p = range.0;
    while p < range.1 {
        let mut b = [[0.0f32; LANES]; R];
        for (j, bj) in b.iter_mut().enumerate() {
            let off = offs[r0 + j];
            bj.copy_from_slice(&xp[off + p..off + p + LANES]);
        }
        for i in 0..M {
            let d: &[f32; LANES] = dyp[(co + i) * n + p..(co + i) * n + p + LANES].try_into().expect("block");
            for j in 0..R {
                for l in 0..LANES {
                    acc[j][i][l] = fma(d[l], b[j][l], acc[j][i][l]);
                }
            }
        }
        p += LANES;
    }
    for (j, aj) in acc.iter().enumerate() {
        for (i, a) in aj.iter().enumerate() {
            dw[(co + i) * kdim + r0 + j] += a.iter().sum::<f32>();
        }
    }
}

#[inline(always)]
fn wgrad_taps<const M: usize, F: Fn(f32, f32, f32) -> f32>(
    fma: &F,
    dyp: &[f32],
    co: usize,
    offs: &[usize],
    xp: &[f32],
    range: (usize, usize),
    n: usize,
    dw: &mut [f32],
) {
    let mut r = 0;
    while r + 3 <= offs.len() {
        wgrad_tile::<M, 3, _>(fma, dyp, co, offs, r, xp, range, n, dw);
        r += 3;
    }
    while r < offs.len() {
        wgrad_tile::<M, 1, _>(fma, dyp, co, offs, r, xp, range, n, dw);
        r += 1;
    }
}

#[inline(always)]
fn wgrad_body<F: Fn(f32, f32, f32) -> f32>(fma: F, d: Dims, dyp: &[f32], offs: &[usize], xp: &[f32], dw: &mut [f32]) {
    for p0 in (0..d.n).step_by(PIX_BLOCK) {
        let range = (p0, (p0 + PIX_BLOCK).min(d.n));
        let mut co = 0;
        while co < d.c_out {
            match d.c_out - co {
                1 => wgrad_taps::<1, _>(&fma, dyp, co, offs, xp, range, d.n, dw),
                2 => wgrad_taps::<2, _>(&fma, dyp, co, offs, xp, range, d.n, dw),
                3 => wgrad_taps::<3, _>(&fma, dyp, co, offs, xp, range, d.n, dw),
                _ => wgrad_taps::<4, _>(&fma, dyp, co, offs, xp, range, d.n, dw),
            }
            co += 4;
        }
    }
}

fn plain(a: f32, b: f32, c: f32) -> f32 {
    a * b + c
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use super::*;

    fn fused(a: f32, b: f32, c: f32) -> f32 {
        a.mul_add(b, c)
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) fn forward_avx2(d: Dims, wt: &[f32], offs: &[usize], xp: &[f32], out: &mut [f32]) {
        forward_body(fused, d, wt, offs, xp, out)
    }

    #[target_feature(enable = "avx512f,avx2,fma")]
    pub(super) fn forward_avx512(d: Dims, wt: &[f32], offs: &[usize], xp: &[f32], out: &mut [f32]) {
        forward_body(fused, d, wt, offs, xp, out)
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) fn wgrad_avx2(d: Dims, dyp: &[f32], offs: &[usize], xp: &[f32], dw: &mut [f32]) {
        wgrad_body(fused, d, dyp, offs, xp, dw)
    }

    #[target_feature(enable = "avx512f,avx2,fma")]
    pub(super) fn wgrad_avx512(d: Dims, dyp: &[f32], offs: &[usize], xp: &[f32], dw: &mut [f32]) {
        wgrad_body(fused, d, dyp, offs, xp, dw)
    }

    #[derive(Clone, Copy, PartialEq, Eq)]
    pub(super) enum Level {
        Avx512,
        Avx2,
        Baseline,
    }

    pub(super) fn level() -> Level {
        static LEVEL: std::sync::OnceLock<Level> = std::sync::OnceLock::new();
        *LEVEL.get_or_init(|| {
            if !(is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")) {
                Level::Baseline
            } else if is_x86_feature_detected!("avx512f") {
                Level::Avx512
            } else {
                Level::Avx2
            }
        })
    }
}

fn run_forward(d: Dims, wt: &[f32], offs: &[usize], xp: &[f32], out: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        use x86::Level;
        match x86::level() {
            // SAFETY: the features were detected on this CPU.
            Level::Avx512 => return unsafe { x86::forward_avx512(d, wt, offs, xp, out) },
            Level::Avx2 => return unsafe { x86::forward_avx2(d, wt, offs, xp, out) },
            Level::Baseline => {}
        }
    }
    forward_body(plain, d, wt, offs, xp, out)
}

fn run_wgrad(d: Dims, dyp: &[f32], offs: &[usize], xp: &[f32], dw: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        use x86::Level;
        match x86::level() {
            // SAFETY: the features were detected on this CPU.
            Level::Avx512 => return unsafe { x86::wgrad_avx512(d, dyp, offs, xp, dw) },
            Level::Avx2 => return unsafe { x86::wgrad_avx2(d, dyp, offs, xp, dw) },
            Level::Baseline => {}
        }
    }
    wgrad_body(plain, d, dyp, offs, xp, dw)
}

fn dims(c_out: usize, h: usize, w: usize, k: usize, pad: usize) -> Dims {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let (ho, wo) = (hp + 1 - k, wp + 1 - k);
    Dims {
        c_out,
        ho,
        wo,
        wp,
        n: round_up(ho * wp, LANES),
    }
}

/// Adds the stride-1 cross-correlation of one sample `x` (`c_in × h × w`) with
/// `weight` (`c_out × c_in × k × k`) into `out` (`c_out × ho × wo`).
pub(crate) fn accumulate_conv(
    x: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    k: usize,
    pad: usize,
    out: &mut [f32],
) {
    let d = dims(c_out, h, w, k, pad);
    let xp = Padded::new(x, c_in, h, w, pad, k);
    let offs = xp.offsets(c_in, k);
    let kdim = c_in * k * k;
    // Tap-major weights so the channels of one tap are contiguous.
    let mut wt = vec![0.0; kdim * c_out];
    for co in 0..c_out {
        for r in 0..kdim {
            wt[r * c_out + co] = weight[co * kdim + r];
        }
    }
    let mut outp = vec![0.0; c_out * d.n];
    run_forward(d, &wt, &offs, &xp.data, &mut outp);
    for co in 0..c_out {
        for y in 0..d.ho {
            let src = &outp[co * d.n + y * d.wp..co * d.n + y * d.wp + d.wo];
            let dst = &mut out[(co * d.ho + y) * d.wo..(co * d.ho + y + 1) * d.wo];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += s;
            }
        }
    }
}

/// Adds the input gradient of a stride-1 convolution into `dx`
/// (`c_in × h × w`), given `dy` (`c_out × ho × wo`).
pub(crate) fn accumulate_input_grad(
    dy: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    k: usize,
    pad: usize,
    dx: &mut [f32],
) {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    // Correlating dy with the flipped, channel-transposed kernel.
    let mut flipped = vec![0.0; weight.len()];
    for co in 0..c_out {
        for ci in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    flipped[((ci * c_out + co) * k + (k - 1 - ki)) * k + (k - 1 - kj)] =
                        weight[((co * c_in + ci) * k + ki) * k + kj];
                }
            }
        }
    }
    accumulate_conv(dy, (c_out, ho, wo), &flipped, c_in, k, k - 1 - pad, dx);
}

/// Adds the weight gradient of a stride-1 convolution into `dw`
/// (`c_out × c_in × k × k`).
pub(crate) fn accumulate_weight_grad(
    x: &[f32],
    (c_in, h, w): (usize, usize, usize),
    dy: &[f32],
    c_out: usize,
    k: usize,
    pad: usize,
    dw: &mut [f32],
) {
    let d = dims(c_out, h, w, k, pad);
    let xp = Padded::new(x, c_in, h, w, pad, k);
    let offs = xp.offsets(c_in, k);
    let mut dyp = vec![0.0; c_out * d.n];
    for co in 0..c_out {
        for y in 0..d.ho {
            let src = &dy[(co * d.ho + y) * d.wo..(co * d.ho + y + 1) * d.wo];
            dyp[co * d.n + y * d.wp..co * d.n + y * d.wp + d.wo].copy_from_slice(src);
        }
    }
    run_wgrad(d, &dyp, &offs, &xp.data, dw);
}
