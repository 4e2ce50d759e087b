use marforge_core::io::{li_baseline, psnr, render_gray};
use marforge_core::physics::{hu_from_mu, SimulatedCase, Simulator, SpectralModel};
use marforge_core::tomography::{Mask, Tomography};
use marforge_core::{Geometry, Result, Tensor};

/// Overlay colour of metal pixels in rendered views.
pub const METAL_RGBA: [u8; 4] = [255, 140, 0, 255];

/// Images the demo can show.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    /// Metal-affected reconstruction `I_a`.
    Artifact,
    /// Reconstruction of the same phantom without metal, `I_ac`.
    Reference,
    /// The artifact term `F = I_a − I_ac`, shown around zero.
    ArtifactTerm,
    /// Linear-interpolation completion of the metal trace.
    Interpolated,
}

impl View {
    pub fn parse(name: &str) -> Option<View> {
        match name {
            "artifact" => Some(View::Artifact),
            "reference" => Some(View::Reference),
            "artifact-term" => Some(View::ArtifactTerm),
            "li" => Some(View::Interpolated),
            _ => None,
        }
    }
}

/// One simulated phantom and everything derived from it.
pub struct Scene {
    sim: Simulator,
    case: SimulatedCase,
    li: Tensor,
}

impl Scene {
    pub fn new(size: usize, seed: u64) -> Result<Scene> {
        let geom = Geometry::square(size, (size * 3).div_ceil(2))?;
        let sim = Simulator::new(geom, SpectralModel::default())?;
        let case = sim.simulate_case(seed)?;
        let li = li_correct(sim.tomography(), &case.i_a, &case.mask)?;
        Ok(Scene { sim, case, li })
    }

    pub fn size(&self) -> usize {
        self.sim.geometry().image_size
    }

    pub fn metal_pixels(&self) -> usize {
        self.case.mask.count()
    }

    fn hu(&self, mu: &Tensor) -> Result<Tensor> {
        hu_from_mu(mu, self.sim.mu_water())
    }

    /// A view in HU; the artifact term is a difference and carries no offset.
    pub fn view_hu(&self, view: View) -> Result<Tensor> {
        match view {
            View::Artifact => self.hu(&self.case.i_a),
            View::Reference => self.hu(&self.case.i_ac),
            View::Interpolated => self.hu(&self.li),
            View::ArtifactTerm => {
                let f = self.case.i_a.sub(&self.case.i_ac)?;
                Ok(f.scale(1000.0 / self.sim.mu_water() as f32))
            }
        }
    }

    /// RGBA pixels of a view in the window `[lo, hi]` HU, metal highlighted.
    pub fn render(&self, view: View, window: (f32, f32)) -> Result<Vec<u8>> {
        let metal = (view != View::ArtifactTerm).then_some(&self.case.mask);
        rgba(&self.view_hu(view)?, window, metal)
    }

    /// PSNR of a view against the metal-free reference, metal excluded.
    pub fn psnr(&self, view: View) -> Result<f64> {
        psnr(&self.view_hu(view)?, &self.view_hu(View::Reference)?, Some(&self.case.mask))
    }

    /// FBP of the metal-free phantom from `n_angles` projections, in HU,
    /// together with its PSNR against the phantom itself.
    pub fn angle_sweep(&self, n_angles: usize) -> Result<(Tensor, f64)> {
        let base = *self.sim.geometry();
        let geom = Geometry::new(base.image_size, base.pixel_spacing, n_angles, base.n_bins, base.bin_spacing)?;
        let tomo = Tomography::new(geom)?;
        let truth = &self.case.phantom.x_ac;
        let rec = tomo.fbp(&tomo.forward_project(truth)?)?;
        let (rec, truth) = (self.hu(&rec)?, self.hu(truth)?);
        let quality = psnr(&rec, &truth, None)?;
        Ok((rec, quality))
    }
}

/// Reprojects an image, fills the metal trace by linear interpolation,
/// reconstructs and puts the metal pixels back.
pub fn li_correct(tomo: &Tomography, image: &Tensor, mask: &Mask) -> Result<Tensor> {
    let trace = tomo.metal_trace(mask)?;
    let sino = tomo.forward_project(image)?;
    let mut out = tomo.fbp(&li_baseline(&sino, &trace)?)?;
    for (k, &m) in mask.bits().iter().enumerate() {
        if m {
            out.data_mut()[k] = image.data()[k];
        }
    }
    Ok(out)
}

/// Grayscale-windowed RGBA with metal drawn in [`METAL_RGBA`].
pub fn rgba(img_hu: &Tensor, window: (f32, f32), metal: Option<&Mask>) -> Result<Vec<u8>> {
    let gray = render_gray(img_hu, window, None)?;
    let mut out = Vec::with_capacity(gray.len() * 4);
    for (k, &g) in gray.iter().enumerate() {
        if metal.is_some_and(|m| m.bits()[k]) {
            out.extend_from_slice(&METAL_RGBA);
        } else {
            out.extend_from_slice(&[g, g, g, 255]);
        }
    }
    Ok(out)
}
