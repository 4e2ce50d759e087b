use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::networks::{NetworkConfig, TraceGate};
use crate::physics::SpectralModel;
use crate::tensor::AdamConfig;
use crate::tomography::Geometry;

/// Loss weights and blur widths of the training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adv: f32,
    pub prior: f32,
    pub art: f32,
    pub cycle: f32,
    pub fed: f32,
    pub sigma_s: f32,
    pub sigma_i: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            prior: 10.0,
            art: 10.0,
            cycle: 100.0,
            fed: 100.0,
            sigma_s: 1.0,
            sigma_i: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adv, self.prior, self.art, self.cycle, self.fed, self.sigma_s, self.sigma_i];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights and sigmas must be positive: {self:?}")))
        }
    }
}

/// Ablation presets of the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Image domain only: I-Net with cycle and adversarial losses.
    M1,
    /// Dual domain: adds S-Net with the fidelity and artifact-consistency losses.
    M2,
    /// Dual domain with the P-Net prior and its loss.
    M3,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Ablation::M1),
            "m2" => Ok(Ablation::M2),
            "m3" => Ok(Ablation::M3),
            other => Err(Error::Config(format!("unknown ablation `{other}` (m1|m2|m3)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::M1 => "m1",
            Ablation::M2 => "m2",
            Ablation::M3 => "m3",
        })
    }
}

/// The individual terms of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossTerm {
    Cycle,
    Art,
    Adv,
    Fed,
    Prior,
}

/// Everything that defines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: Geometry,
    /// Effective water attenuation (mm⁻¹) of the data, the HU reference.
    pub mu_water: f32,
    pub networks: NetworkConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub pnet_lr: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub pnet_epochs: usize,
    pub seed: u64,
    pub use_snet: bool,
    pub use_pnet: bool,
    pub eq4_literal: bool,
    pub use_adv: bool,
    /// Replace metal pixels by the image mean before the discriminators.
    pub mask_disc_metal: bool,
    /// Caps on the number of cases used (0 = all).
    pub max_train_cases: usize,
    pub max_val_cases: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: Geometry::default(),
            mu_water: SpectralModel::default().mu_water() as f32,
            networks: NetworkConfig::default(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            pnet_lr: 1e-3,
            batch_size: 2,
            epochs: 20,
            pnet_epochs: 5,
            seed: 0,
            use_snet: true,
            use_pnet: true,
            eq4_literal: false,
            use_adv: true,
            mask_disc_metal: true,
            max_train_cases: 0,
            max_val_cases: 0,
        }
    }
}

impl RunConfig {
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        let (snet, pnet) = match ablation {
            Ablation::M1 => (false, false),
            Ablation::M2 => (true, false),
            Ablation::M3 => (true, true),
        };
        self.use_snet = snet;
        self.use_pnet = pnet;
        self.use_adv = true;
        self
    }

    /// The ablation preset these flags correspond to, if any.
    pub fn ablation(&self) -> Option<Ablation> {
        match (self.use_snet, self.use_pnet, self.use_adv) {
            (false, false, true) => Some(Ablation::M1),
            (true, false, true) => Some(Ablation::M2),
            (true, true, true) => Some(Ablation::M3),
            _ => None,
        }
    }

    pub fn gate(&self) -> TraceGate {
        if self.eq4_literal {
            TraceGate::OutsideTrace
        } else {
            TraceGate::InsideTrace
        }
    }

    /// Loss terms that enter the objective under these flags.
    pub fn active_losses(&self) -> Vec<LossTerm> {
        let mut terms = vec![LossTerm::Cycle];
        if self.use_snet {
            terms.push(LossTerm::Art);
        }
        if self.use_adv {
            terms.push(LossTerm::Adv);
        }
        if self.use_snet {
            terms.push(LossTerm::Fed);
        }
        if self.use_pnet {
            terms.push(LossTerm::Prior);
        }
        terms
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.weights.validate()?;
        if !(self.mu_water > 0.0) {
            return Err(Error::Config("mu_water must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.use_pnet && !self.use_snet {
            return Err(Error::Config("use_pnet requires use_snet: the prior guides the S-Net".into()));
        }
        if !(self.adam.lr > 0.0) || !(self.pnet_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let n = &self.networks;
        let w = &self.weights;
        let pairs: Vec<(&str, String)> = vec![
            ("image_size", g.image_size.to_string()),
            ("pixel_spacing", g.pixel_spacing.to_string()),
            ("n_angles", g.n_angles.to_string()),
            ("n_bins", g.n_bins.to_string()),
            ("bin_spacing", g.bin_spacing.to_string()),
            ("mu_water", self.mu_water.to_string()),
            ("pnet_depth", n.pnet_depth.to_string()),
            ("pnet_base", n.pnet_base.to_string()),
            ("snet_depth", n.snet_depth.to_string()),
            ("snet_base", n.snet_base.to_string()),
            ("inet_depth", n.inet_depth.to_string()),
            ("inet_base", n.inet_base.to_string()),
            ("max_channels", n.max_channels.to_string()),
            ("disc_base", n.disc_base.to_string()),
            ("w_adv", w.adv.to_string()),
            ("w_prior", w.prior.to_string()),
            ("w_art", w.art.to_string()),
            ("w_cycle", w.cycle.to_string()),
            ("w_fed", w.fed.to_string()),
            ("sigma_s", w.sigma_s.to_string()),
            ("sigma_i", w.sigma_i.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("eps", self.adam.eps.to_string()),
            ("pnet_lr", self.pnet_lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("pnet_epochs", self.pnet_epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("use_snet", self.use_snet.to_string()),
            ("use_pnet", self.use_pnet.to_string()),
            ("eq4_literal", self.eq4_literal.to_string()),
            ("use_adv", self.use_adv.to_string()),
            ("mask_disc_metal", self.mask_disc_metal.to_string()),
            ("max_train_cases", self.max_train_cases.to_string()),
            ("max_val_cases", self.max_val_cases.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
        }
        let g = &mut self.geometry;
        let n = &mut self.networks;
        let w = &mut self.weights;
        match key {
            "image_size" => g.image_size = parse(key, value)?,
            "pixel_spacing" => g.pixel_spacing = parse(key, value)?,
            "n_angles" => g.n_angles = parse(key, value)?,
            "n_bins" => g.n_bins = parse(key, value)?,
            "bin_spacing" => g.bin_spacing = parse(key, value)?,
            "mu_water" => self.mu_water = parse(key, value)?,
            "pnet_depth" => n.pnet_depth = parse(key, value)?,
            "pnet_base" => n.pnet_base = parse(key, value)?,
            "snet_depth" => n.snet_depth = parse(key, value)?,
            "snet_base" => n.snet_base = parse(key, value)?,
            "inet_depth" => n.inet_depth = parse(key, value)?,
            "inet_base" => n.inet_base = parse(key, value)?,
            "max_channels" => n.max_channels = parse(key, value)?,
            "disc_base" => n.disc_base = parse(key, value)?,
            "w_adv" => w.adv = parse(key, value)?,
            "w_prior" => w.prior = parse(key, value)?,
            "w_art" => w.art = parse(key, value)?,
            "w_cycle" => w.cycle = parse(key, value)?,
            "w_fed" => w.fed = parse(key, value)?,
            "sigma_s" => w.sigma_s = parse(key, value)?,
            "sigma_i" => w.sigma_i = parse(key, value)?,
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "eps" => self.adam.eps = parse(key, value)?,
            "pnet_lr" => self.pnet_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "pnet_epochs" => self.pnet_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "use_snet" => self.use_snet = parse(key, value)?,
            "use_pnet" => self.use_pnet = parse(key, value)?,
            "eq4_literal" => self.eq4_literal = parse(key, value)?,
            "use_adv" => self.use_adv = parse(key, value)?,
            "mask_disc_metal" => self.mask_disc_metal = parse(key, value)?,
            "max_train_cases" => self.max_train_cases = parse(key, value)?,
            "max_val_cases" => self.max_val_cases = parse(key, value)?,
            "ablation" => *self = self.clone().with_ablation(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a `key=value` file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default().with_ablation(Ablation::M2);
        cfg.seed = 17;
        cfg.weights.fed = 3.5;
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn ablations_select_losses() {
        use LossTerm::*;
        let m1 = RunConfig::default().with_ablation(Ablation::M1);
        assert_eq!(m1.active_losses(), vec![Cycle, Adv]);
        let m2 = RunConfig::default().with_ablation(Ablation::M2);
        assert_eq!(m2.active_losses(), vec![Cycle, Art, Adv, Fed]);
        let m3 = RunConfig::default().with_ablation(Ablation::M3);
        assert_eq!(m3.active_losses(), vec![Cycle, Art, Adv, Fed, Prior]);
        assert!(m3.use_snet && m3.use_pnet);
        assert_eq!(m3.ablation(), Some(Ablation::M3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("learning_rate=3\n").unwrap_err();
        assert_eq!(err.category(), "config");
        assert!(RunConfig::parse("use_pnet=true\nuse_snet=false\n").is_err());
    }
}
