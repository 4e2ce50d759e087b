//! The five training losses and their weighted sum.
//!
//! Image-domain terms are weighted means over pixels outside the dilated
//! metal mask; sinogram terms cover the whole sinogram.

use crate::error::Result;
use crate::networks::Discriminator;
use crate::tensor::{Bindings, Graph, Tensor, Var};

use super::config::LossWeights;

/// `L1(x, y)` as a weighted mean of `|x − y|`.
fn l1(g: &mut Graph, x: Var, y: Var, weights: Option<&Tensor>) -> Result<Var> {
    let d = g.sub(x, y)?;
    g.mean_abs(d, weights)
}

/// Cycle consistency: `L1(I_a, I_aca) + L1(I_c, I_cac)`.
pub fn loss_cycle(
    g: &mut Graph,
    i_a: Var,
    i_aca: Var,
    i_c: Var,
    i_cac: Var,
    weights: Option<&Tensor>,
) -> Result<Var> {
    let a = l1(g, i_a, i_aca, weights)?;
    let c = l1(g, i_c, i_cac, weights)?;
    g.add(a, c)
}

/// Artifact consistency: `L1(a_S, a_S′) + L1(a_I, a_I′)`.
pub fn loss_art(
    g: &mut Graph,
    a_s: Var,
    a_s2: Var,
    a_i: Var,
    a_i2: Var,
    weights: Option<&Tensor>,
) -> Result<Var> {
    let s = l1(g, a_s, a_s2, weights)?;
    let i = l1(g, a_i, a_i2, weights)?;
    g.add(s, i)
}

/// Fidelity: `L1(S_ca_se, S_c) + L1(I_ca_se, I_c)`; image weights apply to
/// the image pair only.
pub fn loss_fed(
    g: &mut Graph,
    s_ca_se: Var,
    s_c: Var,
    i_ca_se: Var,
    i_c: Var,
    weights: Option<&Tensor>,
) -> Result<Var> {
    let s = l1(g, s_ca_se, s_c, None)?;
    let i = l1(g, i_ca_se, i_c, weights)?;
    g.add(s, i)
}

/// Prior guidance: mean squared distance between Gaussian-blurred pairs,
/// `‖G_σs(S_p) − G_σs(S_se)‖² + ‖G_σi(I_se) − G_σi(I_ac)‖²`.
///
/// The blur is linear, so each pair is blurred as a difference. `s_p` should
/// be a constant so that nothing flows back into the prior network.
#[allow(clippy::too_many_arguments)]
pub fn loss_prior(
    g: &mut Graph,
    s_p: Var,
    s_se: Var,
    i_se: Var,
    i_ac: Var,
    weights: &LossWeights,
    image_weights: Option<&Tensor>,
) -> Result<Var> {
    let ds = g.sub(s_p, s_se)?;
    let ds = g.gaussian_blur(ds, weights.sigma_s)?;
    let s = g.mean_square(ds, None)?;
    let di = g.sub(i_se, i_ac)?;
    let di = g.gaussian_blur(di, weights.sigma_i)?;
    let i = g.mean_square(di, image_weights)?;
    g.add(s, i)
}

/// Discriminator input: with `mask`, metal pixels are replaced by the mean of
/// the remaining pixels of the same sample (a constant).
pub fn mask_metal(g: &mut Graph, x: Var, mask: Option<&Tensor>) -> Result<Var> {
    let Some(mask) = mask else { return Ok(x) };
    let value = g.value(x);
    let s = value.shape();
    let plane = s.c * s.plane_len();
    let mut keep = Tensor::zeros(s);
    let mut fill = Tensor::zeros(s);
    for n in 0..s.n {
        let xs = &value.data()[n * plane..(n + 1) * plane];
        let ms = &mask.data()[n * plane..(n + 1) * plane];
        let (sum, count) = xs
            .iter()
            .zip(ms)
            .filter(|(_, &m)| m < 0.5)
            .fold((0.0f64, 0usize), |(s, c), (&v, _)| (s + v as f64, c + 1));
        let mean = if count > 0 { (sum / count as f64) as f32 } else { 0.0 };
        for i in 0..plane {
            let metal = ms[i] >= 0.5;
            keep.data_mut()[n * plane + i] = if metal { 0.0 } else { 1.0 };
            fill.data_mut()[n * plane + i] = if metal { mean } else { 0.0 };
        }
    }
    let keep = g.constant(keep);
    let fill = g.constant(fill);
    let kept = g.mul(x, keep)?;
    g.add(kept, fill)
}

/// Non-saturating generator loss for one discriminator: `BCE(D(fake), 1)`.
pub fn generator_adv(
    g: &mut Graph,
    disc: &Discriminator,
    params: &Bindings,
    fake: Var,
    mask: Option<&Tensor>,
) -> Result<Var> {
    let x = mask_metal(g, fake, mask)?;
    let logits = disc.forward(g, params, x)?;
    Ok(g.bce_with_logits(logits, 1.0))
}

/// Discriminator loss: `BCE(D(real), 1) + BCE(D(fake), 0)` with the fake
/// detached from whatever produced it.
pub fn discriminator_adv(
    g: &mut Graph,
    disc: &Discriminator,
    params: &Bindings,
    real: Var,
    fake: Var,
    mask: Option<&Tensor>,
) -> Result<Var> {
    let fake = g.detach(fake);
    let real = mask_metal(g, real, mask)?;
    let fake = mask_metal(g, fake, mask)?;
    let lr = disc.forward(g, params, real)?;
    let lr = g.bce_with_logits(lr, 1.0);
    let lf = disc.forward(g, params, fake)?;
    let lf = g.bce_with_logits(lf, 0.0);
    g.add(lr, lf)
}

/// Loss terms of one generator step; absent terms are disabled.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossVars {
    pub cycle: Option<Var>,
    pub art: Option<Var>,
    pub adv: Option<Var>,
    pub fed: Option<Var>,
    pub prior: Option<Var>,
}

/// `w_adv·L_adv + w_prior·L_prior + w_art·L_art + w_cycle·L_cycle + w_fed·L_fed`
/// over the enabled terms.
pub fn total_objective(g: &mut Graph, losses: &LossVars, w: &LossWeights) -> Result<Var> {
    let terms = [
        (losses.adv, w.adv),
        (losses.prior, w.prior),
        (losses.art, w.art),
        (losses.cycle, w.cycle),
        (losses.fed, w.fed),
    ];
    let mut total = g.constant(Tensor::scalar(0.0));
    for (v, weight) in terms {
        if let Some(v) = v {
            let scaled = g.scale(v, weight);
            total = g.add(total, scaled)?;
        }
    }
    Ok(total)
}
