//! Polychromatic beam-hardening simulation and the additive artifact model.
//!
//! Tissue attenuation is taken as energy independent, so only the metal sees
//! the spectrum. The measured sinogram is `P(X_ac) + B` with the
//! beam-hardening term `B = −ln Σ η(E) exp(−P(X_m(E)))`; because FBP is linear
//! the reconstruction splits exactly into `I_ac + FBP(B)`.

mod hu;
mod phantom;
mod simulate;
mod spectrum;

pub use hu::{hu_from_mu, mu_from_hu, segment_metal, METAL_THRESHOLD_HU};
pub use phantom::{Ellipse, PhantomCase, PhantomConfig, PhantomGenerator};
pub use simulate::{SimulatedCase, Simulator, ARTIFACT_STREAM, CLEAN_STREAM};
pub use spectrum::{MaterialTable, SpectralModel, Spectrum};
