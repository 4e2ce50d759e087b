use std::sync::Arc;

use crate::error::{Error, Result};
use crate::networks::{NetworkSet, PNet};
use crate::tensor::{Bindings, Graph, LinearOperator, ParamStore, Tensor, Var};
use crate::tomography::{Geometry, Mask, Tomography};

/// Projection and reconstruction in pipeline units.
///
/// Images inside the pipeline are water-normalized (`u = μ / μ_water`, so
/// water is 1 and one unit is 1000 HU). Sinograms stay physical line
/// integrals: `project(u) = μ_water · FP(u) = FP(μ)`, and `reconstruct`
/// divides the filtered backprojection by `μ_water` again.
#[derive(Clone)]
pub struct Reconstructor {
    tomo: Tomography,
    mu_water: f32,
    fp: Arc<dyn LinearOperator>,
    fbp: Arc<dyn LinearOperator>,
}

impl std::fmt::Debug for Reconstructor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reconstructor")
            .field("geometry", self.tomo.geometry())
            .field("mu_water", &self.mu_water)
            .finish()
    }
}

impl Reconstructor {
    pub fn new(geom: Geometry, mu_water: f32) -> Result<Self> {
        if !(mu_water > 0.0) {
            return Err(Error::invalid(format!("mu_water must be positive, got {mu_water}")));
        }
        let tomo = Tomography::new(geom)?;
        let fp = tomo.fp_op();
        let fbp = tomo.fbp_op();
        Ok(Reconstructor { tomo, mu_water, fp, fbp })
    }

    pub fn tomography(&self) -> &Tomography {
        &self.tomo
    }

    pub fn geometry(&self) -> &Geometry {
        self.tomo.geometry()
    }

    pub fn mu_water(&self) -> f32 {
        self.mu_water
    }

    /// Attenuation image (mm⁻¹) to pipeline units.
    pub fn normalize(&self, mu: &Tensor) -> Tensor {
        mu.scale(1.0 / self.mu_water)
    }

    /// Pipeline units back to attenuation (mm⁻¹).
    pub fn denormalize(&self, u: &Tensor) -> Tensor {
        u.scale(self.mu_water)
    }

    pub fn project(&self, u: &Tensor) -> Result<Tensor> {
        Ok(self.tomo.forward_project(u)?.scale(self.mu_water))
    }

    pub fn reconstruct(&self, sino: &Tensor) -> Result<Tensor> {
        Ok(self.tomo.fbp(sino)?.scale(1.0 / self.mu_water))
    }

    pub fn project_var(&self, g: &mut Graph, u: Var) -> Result<Var> {
        let s = g.linear(u, self.fp.clone())?;
        Ok(g.scale(s, self.mu_water))
    }

    pub fn reconstruct_var(&self, g: &mut Graph, sino: Var) -> Result<Var> {
        let img = g.linear(sino, self.fbp.clone())?;
        Ok(g.scale(img, 1.0 / self.mu_water))
    }

    /// Everything about an artifact-affected image that does not depend on
    /// trainable parameters. `prior` is the frozen P-Net, if used.
    pub fn artifact_case(
        &self,
        image: &Tensor,
        mask: &Mask,
        prior: Option<(&PNet, &ParamStore)>,
    ) -> Result<ArtifactCase> {
        let trace = self.tomo.metal_trace(mask)?;
        let sino = self.project(image)?;
        let metal_proj = self.tomo.forward_project(&mask.to_tensor())?;
        let prior = match prior {
            Some((pnet, params)) => Some(pnet.infer(params, &sino, &trace)?),
            None => None,
        };
        let loss_weights = mask.dilate(1).complement_tensor();
        if loss_weights.sum() <= 0.0 {
            return Err(Error::invalid("metal mask covers the whole image"));
        }
        Ok(ArtifactCase {
            image: image.clone(),
            mask: mask.clone(),
            trace,
            sino,
            metal_proj,
            prior,
            loss_weights,
        })
    }

    pub fn clean_case(&self, image: &Tensor) -> Result<CleanCase> {
        Ok(CleanCase {
            image: image.clone(),
            sino: self.project(image)?,
        })
    }
}

/// Parameter-independent inputs for one artifact-affected image.
#[derive(Clone, Debug)]
pub struct ArtifactCase {
    /// `I_a` in pipeline units, `(1, 1, H, W)`.
    pub image: Tensor,
    pub mask: Mask,
    pub trace: Mask,
    /// `S^a = P(I_a)`.
    pub sino: Tensor,
    /// `P(M)` of the binary metal mask (path lengths in mm).
    pub metal_proj: Tensor,
    /// `S^a_p` from the frozen P-Net.
    pub prior: Option<Tensor>,
    /// 1 outside the one-pixel-dilated metal mask, 0 on it.
    pub loss_weights: Tensor,
}

/// A clean image and its projection.
#[derive(Clone, Debug)]
pub struct CleanCase {
    pub image: Tensor,
    pub sino: Tensor,
}

/// An unpaired batch: artifact case `k` is paired with clean case `k`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub i_a: Tensor,
    /// Clean partners; absent for inference-only batches.
    pub i_c: Option<Tensor>,
    pub s_a: Tensor,
    pub s_c: Option<Tensor>,
    pub s_a_p: Option<Tensor>,
    pub metal_proj: Tensor,
    pub trace: Tensor,
    pub loss_weights: Tensor,
    /// Metal masks of the artifact cases, `(N, 1, H, W)`.
    pub mask: Tensor,
}

fn stack<'a>(items: impl Iterator<Item = &'a Tensor>) -> Result<Tensor> {
    Tensor::stack(&items.collect::<Vec<_>>())
}

impl Batch {
    pub fn new(arts: &[&ArtifactCase], cleans: &[&CleanCase]) -> Result<Self> {
        if arts.len() != cleans.len() {
            return Err(Error::invalid(format!(
                "a batch needs equally many artifact ({}) and clean ({}) cases",
                arts.len(),
                cleans.len()
            )));
        }
        let mut batch = Batch::artifact_only(arts)?;
        batch.i_c = Some(stack(cleans.iter().map(|c| &c.image))?);
        batch.s_c = Some(stack(cleans.iter().map(|c| &c.sino))?);
        Ok(batch)
    }

    /// A batch for Phase I only.
    pub fn artifact_only(arts: &[&ArtifactCase]) -> Result<Self> {
        if arts.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let s_a_p = if arts.iter().all(|a| a.prior.is_some()) {
            Some(stack(arts.iter().filter_map(|a| a.prior.as_ref()))?)
        } else {
            None
        };
        let traces: Vec<Tensor> = arts.iter().map(|a| a.trace.to_tensor()).collect();
        let masks: Vec<Tensor> = arts.iter().map(|a| a.mask.to_tensor()).collect();
        Ok(Batch {
            i_a: stack(arts.iter().map(|a| &a.image))?,
            i_c: None,
            s_a: stack(arts.iter().map(|a| &a.sino))?,
            s_c: None,
            s_a_p,
            metal_proj: stack(arts.iter().map(|a| &a.metal_proj))?,
            trace: stack(traces.iter())?,
            loss_weights: stack(arts.iter().map(|a| &a.loss_weights))?,
            mask: stack(masks.iter())?,
        })
    }

    pub fn len(&self) -> usize {
        self.i_a.shape().n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generator networks bound to a graph.
pub struct Generators<'a> {
    pub nets: &'a NetworkSet,
    /// `None` runs the image-domain-only variant.
    pub snet: Option<Bindings>,
    pub inet: Bindings,
}

impl<'a> Generators<'a> {
    pub fn bind(g: &mut Graph, nets: &'a NetworkSet, use_snet: bool, trainable: bool) -> Self {
        Generators {
            nets,
            snet: use_snet.then(|| nets.snet_params.bind(g, trainable)),
            inet: nets.inet_params.bind(g, trainable),
        }
    }
}

/// Phase I: decomposition of the artifact-affected image.
#[derive(Clone, Copy, Debug)]
pub struct PhaseOne {
    pub i_a: Var,
    pub s_a: Var,
    pub s_a_p: Option<Var>,
    pub s_a_se: Var,
    pub a_s: Var,
    pub i_a_se: Var,
    pub a_i: Var,
    pub i_ac: Var,
}

/// Phase II: synthesis on the clean image and removal again.
#[derive(Clone, Copy, Debug)]
pub struct PhaseTwo {
    pub i_c: Var,
    pub i_ca: Var,
    pub s_ca: Option<Var>,
    pub s_ca_se: Option<Var>,
    pub a_s: Var,
    pub i_ca_se: Var,
    pub a_i: Var,
    pub i_cac: Var,
    pub i_aca: Var,
}

fn finite(g: &Graph, v: Var, stage: &str) -> Result<Var> {
    if g.value(v).is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(stage.to_string()))
    }
}

/// Shared decomposition of an image `x` into `(S_se, a_S, I_se, a_I)`.
struct Decomposition {
    sino: Option<Var>,
    sino_se: Option<Var>,
    a_s: Var,
    img_se: Var,
    a_i: Var,
}

fn decompose(
    g: &mut Graph,
    rec: &Reconstructor,
    gens: &Generators,
    batch: &Batch,
    x: Var,
    sino: Option<Var>,
    phase: &str,
) -> Result<Decomposition> {
    let (sino, sino_se, a_s, img_se) = match &gens.snet {
        Some(b) => {
            let sino = match sino {
                Some(s) => s,
                None => {
                    let s = rec.project_var(g, x)?;
                    finite(g, s, &format!("{phase}/project"))?
                }
            };
            let se = gens.nets.snet.forward(g, b, sino, &batch.metal_proj, &batch.trace)?;
            let se = finite(g, se, &format!("{phase}/snet"))?;
            // P*(S) − P*(S_se) = P*(S − S_se) by linearity of the reconstruction.
            let diff = g.sub(sino, se)?;
            let a_s = rec.reconstruct_var(g, diff)?;
            let a_s = finite(g, a_s, &format!("{phase}/a_s"))?;
            let img_se = g.sub(x, a_s)?;
            (Some(sino), Some(se), a_s, img_se)
        }
        None => {
            let zero = g.constant(Tensor::zeros(g.shape(x)));
            (None, None, zero, x)
        }
    };
    let a_i = gens.nets.inet.forward(g, &gens.inet, img_se)?;
    let a_i = finite(g, a_i, &format!("{phase}/inet"))?;
    Ok(Decomposition { sino, sino_se, a_s, img_se, a_i })
}

/// Phase I on `batch.i_a`.
pub fn phase1(g: &mut Graph, rec: &Reconstructor, gens: &Generators, batch: &Batch) -> Result<PhaseOne> {
    let i_a = g.constant(batch.i_a.clone());
    let s_a = g.constant(batch.s_a.clone());
    let s_a_p = batch.s_a_p.as_ref().map(|p| g.constant(p.clone()));
    let d = decompose(g, rec, gens, batch, i_a, Some(s_a), "phase1")?;
    let i_ac = g.sub(d.img_se, d.a_i)?;
    Ok(PhaseOne {
        i_a,
        s_a,
        s_a_p,
        s_a_se: d.sino_se.unwrap_or(s_a),
        a_s: d.a_s,
        i_a_se: d.img_se,
        a_i: d.a_i,
        i_ac,
    })
}

/// Phase II on `batch.i_c`, reusing the components and trace of Phase I.
pub fn phase2(
    g: &mut Graph,
    rec: &Reconstructor,
    gens: &Generators,
    batch: &Batch,
    one: &PhaseOne,
) -> Result<PhaseTwo> {
    let i_c = batch
        .i_c
        .as_ref()
        .ok_or_else(|| Error::invalid("phase2 needs clean images in the batch"))?;
    let i_c = g.constant(i_c.clone());
    let art = g.add(one.a_s, one.a_i)?;
    let i_ca = g.add(i_c, art)?;
    let d = decompose(g, rec, gens, batch, i_ca, None, "phase2")?;
    let removed = g.add(d.a_s, d.a_i)?;
    let i_cac = g.sub(i_ca, removed)?;
    let i_aca = g.add(one.i_ac, removed)?;
    Ok(PhaseTwo {
        i_c,
        i_ca,
        s_ca: d.sino,
        s_ca_se: d.sino_se,
        a_s: d.a_s,
        i_ca_se: d.img_se,
        a_i: d.a_i,
        i_cac,
        i_aca,
    })
}
