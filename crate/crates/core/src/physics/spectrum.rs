use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on `Σ η(E) = 1`.
const NORMALIZATION_TOL: f64 = 1e-9;

const DEFAULT_TABLE: &str = include_str!("../../data/spectrum.txt");

/// Discrete X-ray spectrum: energy bin centres and their photon fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    energies_kev: Vec<f64>,
    fractions: Vec<f64>,
}

impl Spectrum {
    /// Fractions must be non-negative and already sum to one.
    pub fn new(energies_kev: Vec<f64>, fractions: Vec<f64>) -> Result<Self> {
        if energies_kev.is_empty() || energies_kev.len() != fractions.len() {
            return Err(Error::invalid(format!(
                "spectrum needs matching, non-empty energy and fraction lists (got {} and {})",
                energies_kev.len(),
                fractions.len()
            )));
        }
        if fractions.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
            return Err(Error::invalid("spectrum fractions must be finite and non-negative"));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "spectrum fractions sum to {total}, expected 1"
            )));
        }
        Ok(Spectrum { energies_kev, fractions })
    }

    /// Rescales arbitrary non-negative weights to unit sum.
    pub fn normalized(energies_kev: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("spectrum weights must have a positive sum"));
        }
        Spectrum::new(energies_kev, weights.iter().map(|w| w / total).collect())
    }

    /// Single energy bin carrying all photons.
    pub fn monochromatic(energy_kev: f64) -> Self {
        Spectrum {
            energies_kev: vec![energy_kev],
            fractions: vec![1.0],
        }
    }

    pub fn energies_kev(&self) -> &[f64] {
        &self.energies_kev
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn is_polychromatic(&self) -> bool {
        self.len() >= 2
    }

    /// Spectrum-weighted mean `Σ η(E) μ(E)`.
    pub fn effective(&self, mu: &[f64]) -> f64 {
        self.fractions.iter().zip(mu).map(|(f, m)| f * m).sum()
    }

    /// Polychromatic log attenuation `−ln Σ η(E) exp(−μ(E)·p)` of a ray whose
    /// unit-density path integral through the material is `p`.
    ///
    /// Evaluated as a log-sum-exp so that long metal paths do not underflow.
    pub fn log_attenuation(&self, mu: &[f64], path: f64) -> f64 {
        if path == 0.0 {
            return 0.0;
        }
        let exps: Vec<f64> = self
            .fractions
            .iter()
            .zip(mu)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, m)| f.ln() - m * path)
            .collect();
        let peak = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exps.iter().map(|e| (e - peak).exp()).sum();
        -(peak + sum.ln())
    }
}

/// Linear attenuation coefficients in mm⁻¹ for each spectrum bin.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable {
    pub water: Vec<f64>,
    pub bone: Vec<f64>,
    pub metal: Vec<f64>,
}

impl MaterialTable {
    pub fn new(water: Vec<f64>, bone: Vec<f64>, metal: Vec<f64>) -> Result<Self> {
        let n = water.len();
        if bone.len() != n || metal.len() != n || n == 0 {
            return Err(Error::invalid("material curves must share one non-empty energy grid"));
        }
        for (name, curve) in [("water", &water), ("bone", &bone), ("metal", &metal)] {
            if curve.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
                return Err(Error::invalid(format!("{name} attenuation must be positive")));
            }
        }
        if metal.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(
                "metal attenuation must strictly decrease with energy",
            ));
        }
        Ok(MaterialTable { water, bone, metal })
    }

    pub fn len(&self) -> usize {
        self.water.len()
    }

    pub fn is_empty(&self) -> bool {
        self.water.is_empty()
    }
}

/// A spectrum together with the material table sampled on its energy grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    pub spectrum: Spectrum,
    pub materials: MaterialTable,
}

impl SpectralModel {
    pub fn new(spectrum: Spectrum, materials: MaterialTable) -> Result<Self> {
        if spectrum.len() != materials.len() {
            return Err(Error::invalid(format!(
                "spectrum has {} bins but material table has {}",
                spectrum.len(),
                materials.len()
            )));
        }
        Ok(SpectralModel { spectrum, materials })
    }

    /// Parses rows of `energy_keV fraction mu_water mu_bone mu_metal`.
    ///
    /// Blank lines and `#` comments are skipped; every other line must have
    /// exactly five numeric columns.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::format(
                    "spectrum table",
                    format!("line {}: expected 5 columns, found {}", lineno + 1, fields.len()),
                ));
            }
            for (col, field) in cols.iter_mut().zip(&fields) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::format(
                        "spectrum table",
                        format!("line {}: `{field}` is not a number", lineno + 1),
                    )
                })?;
                col.push(v);
            }
        }
        let [energies, fractions, water, bone, metal] = cols;
        let spectrum = Spectrum::new(energies, fractions)?;
        SpectralModel::new(spectrum, MaterialTable::new(water, bone, metal)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SpectralModel::parse(&std::fs::read_to_string(path)?)
    }

    /// Effective water attenuation, the reference for HU conversion.
    pub fn mu_water(&self) -> f64 {
        self.spectrum.effective(&self.materials.water)
    }

    pub fn mu_bone(&self) -> f64 {
        self.spectrum.effective(&self.materials.bone)
    }

    pub fn mu_metal(&self) -> f64 {
        self.spectrum.effective(&self.materials.metal)
    }
}

impl Default for SpectralModel {
    fn default() -> Self {
        SpectralModel::parse(DEFAULT_TABLE).expect("bundled spectrum table is valid")
    }
}
