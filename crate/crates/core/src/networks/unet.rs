use crate::error::{Error, Result};
use crate::tensor::{Bindings, Graph, ParamStore, Tensor, Var};

use super::layers::{conv, conv_leaky, max_pool, Initializer};

/// Shape of a U-Net. Level `l` carries `min(base · 2^l, max_channels)`
/// feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetSpec {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub max_channels: usize,
    /// Concatenate a max-pooled mask to every encoder level.
    pub mask_pyramid: bool,
}

impl UNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!(
                "U-Net needs depth, channels and widths of at least 1: {self:?}"
            )));
        }
        if self.max_channels < self.base_channels {
            return Err(Error::Config("U-Net max_channels is below base_channels".into()));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        (self.base_channels << level.min(20)).min(self.max_channels)
    }

    /// Spatial multiple the input is padded to.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }
}

/// Encoder–decoder with skip connections.
///
/// Encoder: a 3×3 stem, then per level a stride-2 3×3 convolution followed by
/// a 3×3 convolution. Decoder: nearest 2× upsampling, concatenation with the
/// matching encoder output, and a 3×3 convolution. A zero-initialized 1×1
/// convolution produces the output, so a fresh network returns zeros.
/// Inputs are replicate-padded at the bottom/right to a multiple of
/// `2^depth` and the output is cropped back.
#[derive(Clone, Debug)]
pub struct UNet {
    spec: UNetSpec,
    prefix: String,
}

impl UNet {
    pub fn new(prefix: impl Into<String>, spec: UNetSpec) -> Result<Self> {
        spec.validate()?;
        Ok(UNet {
            spec,
            prefix: prefix.into(),
        })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    fn name(&self, layer: &str) -> String {
        format!("{}.{layer}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, init: &mut Initializer) -> Result<()> {
        let s = &self.spec;
        let extra = usize::from(s.mask_pyramid);
        init.conv(store, &self.name("enc0"), s.channels(0), s.in_channels, 3, false)?;
        for l in 1..=s.depth {
            init.conv(store, &self.name(&format!("down{l}")), s.channels(l), s.channels(l - 1), 3, false)?;
            init.conv(store, &self.name(&format!("enc{l}")), s.channels(l), s.channels(l) + extra, 3, false)?;
        }
        for l in (1..=s.depth).rev() {
            let c_in = s.channels(l) + s.channels(l - 1);
            init.conv(store, &self.name(&format!("dec{l}")), s.channels(l - 1), c_in, 3, false)?;
        }
        init.conv(store, &self.name("out"), s.out_channels, s.channels(0), 1, true)
    }

    /// Runs the network on `x` of shape `(N, in_channels, H, W)`. `mask`
    /// (shape `(N, 1, H, W)`) is required exactly when the spec uses a mask
    /// pyramid.
    pub fn forward(&self, g: &mut Graph, b: &Bindings, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let s = self.spec;
        let shape = g.shape(x);
        if shape.c != s.in_channels {
            return Err(Error::shape(
                "unet",
                format!("channel dimension {} but {} expects {}", shape.c, self.prefix, s.in_channels),
            ));
        }
        let m = s.multiple();
        let (ph, pw) = (shape.h.div_ceil(m) * m - shape.h, shape.w.div_ceil(m) * m - shape.w);
        let xp = if ph + pw > 0 { g.pad_replicate(x, 0, ph, 0, pw) } else { x };

        let pyramid = match (s.mask_pyramid, mask) {
            (true, Some(mt)) => {
                let ms = mt.shape();
                if (ms.n, ms.c, ms.h, ms.w) != (shape.n, 1, shape.h, shape.w) {
                    return Err(Error::shape("unet", format!("mask {ms} vs input {shape}")));
                }
                let mv = g.constant(mt.clone());
                let padded = g.pad_replicate(mv, 0, ph, 0, pw);
                let full = g.value(padded).clone();
                (1..=s.depth).map(|l| max_pool(&full, 1 << l)).collect()
            }
            (true, None) => {
                return Err(Error::Config(format!("{} needs a mask for its pyramid", self.prefix)))
            }
            (false, _) => Vec::new(),
        };

        let mut skips = vec![conv_leaky(g, b, &self.name("enc0"), xp, 1, 1)?];
        for l in 1..=s.depth {
            let prev = *skips.last().expect("stem is present");
            let mut d = conv_leaky(g, b, &self.name(&format!("down{l}")), prev, 2, 1)?;
            if let Some(level_mask) = pyramid.get(l - 1) {
                let mv = g.constant(level_mask.clone());
                d = g.concat(&[d, mv])?;
            }
            skips.push(conv_leaky(g, b, &self.name(&format!("enc{l}")), d, 1, 1)?);
        }
        let mut up = skips[s.depth];
        for l in (1..=s.depth).rev() {
            let u = g.upsample_nearest(up, 2)?;
            let cat = g.concat(&[u, skips[l - 1]])?;
            up = conv_leaky(g, b, &self.name(&format!("dec{l}")), cat, 1, 1)?;
        }
        let out = conv(g, b, &self.name("out"), up, 1, 0)?;
        if ph + pw > 0 {
            g.crop(out, 0, 0, shape.h, shape.w)
        } else {
            Ok(out)
        }
    }
}
