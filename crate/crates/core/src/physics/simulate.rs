use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::phantom::{PhantomCase, PhantomGenerator};
use super::spectrum::SpectralModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tomography::{Geometry, Mask, Tomography};

/// Stream used for the metal-affected phantom of a case.
pub const ARTIFACT_STREAM: u64 = 0;
/// Stream used for the unrelated clean phantom of a case.
pub const CLEAN_STREAM: u64 = 1;
/// Stream used for photon noise.
const NOISE_STREAM: u64 = 2;

/// One simulated training case. All images are attenuation maps in mm⁻¹.
#[derive(Clone, Debug)]
pub struct SimulatedCase {
    pub seed: u64,
    /// Clean reconstruction of an unrelated phantom.
    pub i_c: Tensor,
    /// Metal-affected reconstruction.
    pub i_a: Tensor,
    /// Reconstruction of the metal-free part of the same phantom.
    pub i_ac: Tensor,
    pub mask: Mask,
    pub phantom: PhantomCase,
}

/// Polychromatic CT simulator: phantoms, beam hardening and reconstruction
/// on one geometry.
#[derive(Clone, Debug)]
pub struct Simulator {
    tomo: Tomography,
    model: SpectralModel,
    generator: PhantomGenerator,
    /// Incident photons per ray; `None` disables the noise stage.
    pub photons: Option<f64>,
}

impl Simulator {
    pub fn new(geom: Geometry, model: SpectralModel) -> Result<Self> {
        let tomo = Tomography::new(geom)?;
        let generator = PhantomGenerator::new(geom.image_size, model.mu_water(), model.mu_bone());
        Ok(Simulator {
            tomo,
            model,
            generator,
            photons: None,
        })
    }

    pub fn tomography(&self) -> &Tomography {
        &self.tomo
    }

    pub fn geometry(&self) -> &Geometry {
        self.tomo.geometry()
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn generator(&self) -> &PhantomGenerator {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut PhantomGenerator {
        &mut self.generator
    }

    /// Effective water attenuation used for HU conversion.
    pub fn mu_water(&self) -> f64 {
        self.model.mu_water()
    }

    fn check_case(&self, case: &PhantomCase) -> Result<()> {
        let n = self.geometry().image_size;
        if case.size() != n || case.x_ac.shape() != self.geometry().image_shape() {
            return Err(Error::shape(
                "simulate",
                format!("phantom is {} pixels wide, geometry expects {n}", case.size()),
            ));
        }
        Ok(())
    }

    /// `B = −ln Σ η(E) exp(−μ_metal(E)·P(ρ))`, zero off the metal trace.
    pub fn beam_hardening_term(&self, case: &PhantomCase) -> Result<Tensor> {
        self.check_case(case)?;
        let trace = self.tomo.metal_trace(&case.mask)?;
        let density = case.metal_density.zip_map(&case.mask.to_tensor(), |d, m| d * m)?;
        let path = self.tomo.forward_project(&density)?;
        let spectrum = &self.model.spectrum;
        let mu = &self.model.materials.metal;
        let data = path
            .data()
            .iter()
            .zip(trace.bits())
            .map(|(&p, &inside)| {
                if inside {
                    spectrum.log_attenuation(mu, p as f64) as f32
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::from_vec(path.shape(), data)
    }

    /// Metal-affected sinogram `P(X_ac) + B`.
    pub fn poly_sinogram(&self, case: &PhantomCase) -> Result<Tensor> {
        let clean = self.tomo.forward_project(&case.x_ac)?;
        clean.add(&self.beam_hardening_term(case)?)
    }

    /// Additive artifact image `F = FBP(B)`, so that `I_a = I_ac + F`.
    pub fn artifact_image(&self, case: &PhantomCase) -> Result<Tensor> {
        self.tomo.fbp(&self.beam_hardening_term(case)?)
    }

    /// Replaces each line integral by a Poisson-noisy measurement when the
    /// noise stage is enabled.
    fn add_noise(&self, sino: Tensor, seed: u64) -> Result<Tensor> {
        let Some(photons) = self.photons else {
            return Ok(sino);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        let mut out = sino;
        for v in out.data_mut() {
            let expected = photons * (-(*v as f64)).exp();
            let counts = Poisson::new(expected.max(1e-9))
                .map_err(|e| Error::invalid(format!("poisson rate: {e}")))?
                .sample(&mut rng)
                .max(1.0);
            *v = -(counts / photons).ln() as f32;
        }
        Ok(out)
    }

    /// Simulates the metal-affected phantom for `seed` and a clean phantom
    /// from an independent stream of the same seed.
    pub fn simulate_case(&self, seed: u64) -> Result<SimulatedCase> {
        let phantom = self.generator.generate(seed, ARTIFACT_STREAM);
        let s_a = self.add_noise(self.poly_sinogram(&phantom)?, seed)?;
        let i_a = self.tomo.fbp(&s_a)?;
        let i_ac = self.tomo.fbp(&self.tomo.forward_project(&phantom.x_ac)?)?;
        let i_c = self.clean_image(seed)?;
        Ok(SimulatedCase {
            seed,
            i_c,
            i_a,
            i_ac,
            mask: phantom.mask.clone(),
            phantom,
        })
    }

    /// Reconstruction of the metal-free phantom drawn from the clean stream.
    pub fn clean_image(&self, seed: u64) -> Result<Tensor> {
        let clean = self.generator.generate(seed, CLEAN_STREAM);
        self.tomo.fbp(&self.tomo.forward_project(&clean.x_ac)?)
    }
}
