use crate::error::{Error, Result};
use crate::io::li_baseline;
use crate::tensor::{Bindings, Graph, ParamStore, Tensor, Var};
use crate::tomography::Mask;

use super::layers::{conv, conv_leaky, stack_planes, Initializer};
use super::unet::{UNet, UNetSpec};

/// I-Net inputs are clamped to this range (water-normalized units) so that
/// residual metal does not dominate the first layer.
pub const INET_INPUT_RANGE: (f32, f32) = (-1.0, 4.0);
/// Scale applied to the metal projection `P(M)` before it enters S-Net.
pub const METAL_PROJ_SCALE: f32 = 0.2;

fn check_same(g: &Graph, a: Var, t: &Tensor, op: &'static str, what: &str) -> Result<()> {
    let (sa, st) = (g.shape(a), t.shape());
    if (sa.n, sa.h, sa.w) != (st.n, st.h, st.w) || st.c != 1 {
        return Err(Error::shape(op, format!("{what} {st} does not match input {sa}")));
    }
    Ok(())
}

/// Sinogram inpainting network.
///
/// The metal trace is first filled by linear interpolation; the mask-pyramid
/// U-Net then predicts a correction that is applied only on the trace:
/// `S_p = LI(S) + φ_P([LI(S), M_t]) ⊙ M_t`. Off the trace the output is the
/// input, and a zero-initialized network reproduces the LI completion.
#[derive(Clone, Debug)]
pub struct PNet {
    unet: UNet,
}

impl PNet {
    pub fn new(depth: usize, base: usize, max_channels: usize) -> Result<Self> {
        let spec = UNetSpec {
            depth,
            base_channels: base,
            in_channels: 2,
            out_channels: 1,
            max_channels,
            mask_pyramid: true,
        };
        Ok(PNet { unet: UNet::new("pnet", spec)? })
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) -> Result<()> {
        self.unet.init(store, init)
    }

    /// LI-filled sinograms of a batch, as a `(N, 1, A, B)` tensor.
    pub fn prefill(sinos: &[&Tensor], traces: &[&Mask]) -> Result<Tensor> {
        let filled = sinos
            .iter()
            .zip(traces)
            .map(|(s, t)| li_baseline(s, t))
            .collect::<Result<Vec<_>>>()?;
        stack_planes(&filled.iter().collect::<Vec<_>>())
    }

    /// Graph forward on an LI-prefilled batch and its `(N, 1, A, B)` trace.
    pub fn forward(&self, g: &mut Graph, b: &Bindings, prefilled: Var, trace: &Tensor) -> Result<Var> {
        check_same(g, prefilled, trace, "pnet", "trace")?;
        let t = g.constant(trace.clone());
        let input = g.concat(&[prefilled, t])?;
        let correction = self.unet.forward(g, b, input, Some(trace))?;
        let masked = g.mul(correction, t)?;
        g.add(prefilled, masked)
    }

    /// Inpaints a single sinogram with frozen parameters.
    pub fn infer(&self, store: &ParamStore, sino: &Tensor, trace: &Mask) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = store.bind(&mut g, false);
        let filled = g.constant(PNet::prefill(&[sino], &[trace])?);
        let out = self.forward(&mut g, &b, filled, &trace.to_tensor())?;
        Ok(g.value(out).clone())
    }
}

/// Where the S-Net correction is allowed to act.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceGate {
    /// `S_se = S + φ_S ⊙ M_t`: enhance inside the metal trace only.
    InsideTrace,
    /// `S_se = S + φ_S ⊙ (1 − M_t)`: the formula as printed, which leaves the
    /// trace untouched.
    OutsideTrace,
}

/// Residual sinogram enhancement network (depth-2 U-Net on `[S, P(M)]`).
#[derive(Clone, Debug)]
pub struct SNet {
    unet: UNet,
    pub gate: TraceGate,
}

impl SNet {
    pub fn new(depth: usize, base: usize, max_channels: usize, gate: TraceGate) -> Result<Self> {
        let spec = UNetSpec {
            depth,
            base_channels: base,
            in_channels: 2,
            out_channels: 1,
            max_channels,
            mask_pyramid: false,
        };
        Ok(SNet {
            unet: UNet::new("snet", spec)?,
            gate,
        })
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) -> Result<()> {
        self.unet.init(store, init)
    }

    /// `sino`, `metal_proj` and `trace` are `(N, 1, A, B)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &Bindings,
        sino: Var,
        metal_proj: &Tensor,
        trace: &Tensor,
    ) -> Result<Var> {
        check_same(g, sino, metal_proj, "snet", "metal projection")?;
        check_same(g, sino, trace, "snet", "trace")?;
        let mp = g.constant(metal_proj.scale(METAL_PROJ_SCALE));
        let input = g.concat(&[sino, mp])?;
        let raw = self.unet.forward(g, b, input, None)?;
        let gate = match self.gate {
            TraceGate::InsideTrace => trace.clone(),
            TraceGate::OutsideTrace => trace.map(|m| 1.0 - m),
        };
        let gate = g.constant(gate);
        let masked = g.mul(raw, gate)?;
        g.add(sino, masked)
    }
}

/// Image-domain artifact estimator (depth-5 U-Net).
#[derive(Clone, Debug)]
pub struct INet {
    unet: UNet,
}

impl INet {
    pub fn new(depth: usize, base: usize, max_channels: usize) -> Result<Self> {
        let spec = UNetSpec {
            depth,
            base_channels: base,
            in_channels: 1,
            out_channels: 1,
            max_channels,
            mask_pyramid: false,
        };
        Ok(INet { unet: UNet::new("inet", spec)? })
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) -> Result<()> {
        self.unet.init(store, init)
    }

    /// Artifact component `a_I = φ_I(I_se)` for `(N, 1, H, W)` images.
    pub fn forward(&self, g: &mut Graph, b: &Bindings, img: Var) -> Result<Var> {
        let (lo, hi) = INET_INPUT_RANGE;
        let x = g.clamp(img, lo, hi);
        self.unet.forward(g, b, x, None)
    }
}

/// PatchGAN discriminator on `[image, Sobel(image)]`.
///
/// Three 4×4 stride-2 blocks followed by a 3×3 head; a 128² input yields a
/// 16×16 map of logits.
#[derive(Clone, Debug)]
pub struct Discriminator {
    prefix: String,
    base: usize,
    in_channels: usize,
}

impl Discriminator {
    pub const BLOCKS: usize = 3;

    pub fn new(prefix: impl Into<String>, base: usize, in_channels: usize) -> Result<Self> {
        if in_channels != 2 {
            return Err(Error::Config(format!(
                "discriminators take [image, sobel] = 2 channels, configured with {in_channels}"
            )));
        }
        if base == 0 {
            return Err(Error::Config("discriminator width must be positive".into()));
        }
        Ok(Discriminator {
            prefix: prefix.into(),
            base,
            in_channels,
        })
    }

    fn name(&self, layer: &str) -> String {
        format!("{}.{layer}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) -> Result<()> {
        let mut c_in = self.in_channels;
        for l in 0..Self::BLOCKS {
            let c_out = self.base << l;
            init.conv(store, &self.name(&format!("block{l}")), c_out, c_in, 4, false)?;
            c_in = c_out;
        }
        init.conv(store, &self.name("head"), 1, c_in, 3, false)
    }

    /// Output side length for an input side length.
    pub fn output_size(input: usize) -> usize {
        (0..Self::BLOCKS).fold(input, |s, _| (s + 2 - 4) / 2 + 1)
    }

    /// Patch logits for a `(N, 1, H, W)` image batch.
    pub fn forward(&self, g: &mut Graph, b: &Bindings, img: Var) -> Result<Var> {
        let edges = g.sobel_gradient(img)?;
        let x = g.concat(&[img, edges])?;
        self.forward_pair(g, b, x)
    }

    /// Patch logits for an already assembled two-channel input.
    pub fn forward_pair(&self, g: &mut Graph, b: &Bindings, x: Var) -> Result<Var> {
        let c = g.shape(x).c;
        if c != self.in_channels {
            return Err(Error::Config(format!(
                "{} expects {} input channels (image and Sobel gradient), got {c}",
                self.prefix, self.in_channels
            )));
        }
        let mut h = x;
        for l in 0..Self::BLOCKS {
            h = conv_leaky(g, b, &self.name(&format!("block{l}")), h, 2, 1)?;
        }
        conv(g, b, &self.name("head"), h, 1, 1)
    }
}
