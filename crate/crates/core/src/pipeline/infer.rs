use crate::error::{Error, Result};
use crate::networks::NetworkSet;
use crate::physics::{hu_from_mu, segment_metal, METAL_THRESHOLD_HU};
use crate::tensor::{Graph, Tensor};
use crate::tomography::Mask;

use super::phases::{phase1, ArtifactCase, Batch, Generators, Reconstructor};

/// Phase I output for one image, in pipeline units.
#[derive(Clone, Debug)]
pub struct Inference {
    /// Corrected image with the metal pixels of the input put back.
    pub i_ac: Tensor,
    /// Corrected image as produced by the networks.
    pub raw_i_ac: Tensor,
    pub a_s: Tensor,
    pub a_i: Tensor,
    pub mask: Mask,
}

fn reinsert_metal(corrected: &Tensor, original: &Tensor, mask: &Mask) -> Tensor {
    let mut out = corrected.clone();
    for (i, &metal) in mask.bits().iter().enumerate() {
        if metal {
            out.data_mut()[i] = original.data()[i];
        }
    }
    out
}

/// Phase I on a prepared case with frozen parameters.
pub fn infer_case(rec: &Reconstructor, nets: &NetworkSet, use_snet: bool, case: &ArtifactCase) -> Result<Inference> {
    let batch = Batch::artifact_only(&[case])?;
    let mut g = Graph::new();
    let gens = Generators::bind(&mut g, nets, use_snet, false);
    let one = phase1(&mut g, rec, &gens, &batch)?;
    let raw = g.value(one.i_ac).clone();
    Ok(Inference {
        i_ac: reinsert_metal(&raw, &case.image, &case.mask),
        raw_i_ac: raw,
        a_s: g.value(one.a_s).clone(),
        a_i: g.value(one.a_i).clone(),
        mask: case.mask.clone(),
    })
}

/// Corrects an attenuation image (mm⁻¹). Without a mask, metal is segmented
/// at [`METAL_THRESHOLD_HU`]. The result is in mm⁻¹ as well.
pub fn infer(
    rec: &Reconstructor,
    nets: &NetworkSet,
    use_snet: bool,
    i_a: &Tensor,
    mask: Option<&Mask>,
) -> Result<Inference> {
    let s = i_a.shape();
    let n = rec.geometry().image_size;
    if (s.n, s.c, s.h, s.w) != (1, 1, n, n) {
        return Err(Error::shape("infer", format!("expected a {n}×{n} image, got {s}")));
    }
    let mask = match mask {
        Some(m) => m.clone(),
        None => segment_metal(&hu_from_mu(i_a, rec.mu_water() as f64)?, METAL_THRESHOLD_HU)?,
    };
    let case = rec.artifact_case(&rec.normalize(i_a), &mask, None)?;
    let mut out = infer_case(rec, nets, use_snet, &case)?;
    out.raw_i_ac = rec.denormalize(&out.raw_i_ac);
    out.i_ac = reinsert_metal(&out.raw_i_ac, i_a, &mask);
    out.a_s = rec.denormalize(&out.a_s);
    out.a_i = rec.denormalize(&out.a_i);
    Ok(out)
}
