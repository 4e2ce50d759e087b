use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{parallel_map, psnr, ssim, CaseImages, Dataset, Split};
use crate::networks::NetworkSet;
use crate::physics::hu_from_mu;
use crate::tensor::{adam_step, AdamConfig, Graph, Tensor};

use super::config::{LossTerm, RunConfig};
use super::infer::infer_case;
use super::losses::{
    discriminator_adv, generator_adv, loss_art, loss_cycle, loss_fed, loss_prior, total_objective,
    LossVars,
};
use super::phases::{phase1, phase2, ArtifactCase, Batch, CleanCase, Generators, Reconstructor};

/// Header of the per-epoch metrics log.
pub const METRICS_HEADER: &str = "epoch,psnr,ssim,l_cycle,l_art,l_adv_d,l_adv_g,l_fed,l_prior";

const SHUFFLE_STREAM: u64 = 20;

/// Unweighted loss values of one step (disabled terms are 0).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub cycle: f64,
    pub art: f64,
    pub adv_d: f64,
    pub adv_g: f64,
    pub fed: f64,
    pub prior: f64,
    pub total: f64,
}

impl StepLosses {
    fn accumulate(&mut self, other: &StepLosses) {
        self.cycle += other.cycle;
        self.art += other.art;
        self.adv_d += other.adv_d;
        self.adv_g += other.adv_g;
        self.fed += other.fed;
        self.prior += other.prior;
        self.total += other.total;
    }

    fn scaled(&self, s: f64) -> StepLosses {
        StepLosses {
            cycle: self.cycle * s,
            art: self.art * s,
            adv_d: self.adv_d * s,
            adv_g: self.adv_g * s,
            fed: self.fed * s,
            prior: self.prior * s,
            total: self.total * s,
        }
    }
}

/// One row of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub losses: StepLosses,
}

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{:.4},{:.5},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.psnr, self.ssim, l.cycle, l.art, l.adv_d, l.adv_g, l.fed, l.prior
        )
    }
}

/// A validation case: artifact inputs plus the metal-free ground truth in HU.
#[derive(Clone, Debug)]
pub struct ValCase {
    pub case: ArtifactCase,
    pub input_hu: Tensor,
    pub truth_hu: Tensor,
}

/// Everything the training loop consumes, already in pipeline units.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub artifact: Vec<ArtifactCase>,
    pub clean: Vec<CleanCase>,
    pub val: Vec<ValCase>,
}

fn limited<T>(items: Vec<T>, cap: usize) -> Vec<T> {
    if cap == 0 {
        items
    } else {
        items.into_iter().take(cap).collect()
    }
}

impl TrainingData {
    /// Loads the train and validation splits. The prior sinograms come from
    /// the frozen P-Net in `nets` when `cfg.use_pnet` is set.
    pub fn load(dataset: &Dataset, rec: &Reconstructor, nets: &NetworkSet, cfg: &RunConfig) -> Result<Self> {
        let strip = |v: Vec<(_, CaseImages)>| v.into_iter().map(|(_, c)| c).collect::<Vec<_>>();
        let train = limited(strip(dataset.load_split(Split::Train)?), cfg.max_train_cases);
        let val = limited(strip(dataset.load_split(Split::Val)?), cfg.max_val_cases);
        TrainingData::from_cases(rec, &train, &val, cfg.use_pnet.then_some(nets))
    }

    /// Prepares in-memory cases (attenuation units). Each training case
    /// contributes its artifact image to the artifact pool and its clean image
    /// to the clean pool.
    pub fn from_cases(
        rec: &Reconstructor,
        train: &[CaseImages],
        val: &[CaseImages],
        prior: Option<&NetworkSet>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("the training split is empty"));
        }
        let prior = prior.map(|n| (&n.pnet, &n.pnet_params));
        let artifact = parallel_map(train.len(), |i| {
            rec.artifact_case(&rec.normalize(&train[i].i_a), &train[i].mask, prior)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let clean = parallel_map(train.len(), |i| rec.clean_case(&rec.normalize(&train[i].i_c)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mu_w = rec.mu_water() as f64;
        let val = parallel_map(val.len(), |i| {
            let img = &val[i];
            Ok(ValCase {
                case: rec.artifact_case(&rec.normalize(&img.i_a), &img.mask, None)?,
                input_hu: hu_from_mu(&img.i_a, mu_w)?,
                truth_hu: hu_from_mu(&img.i_ac, mu_w)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(TrainingData { artifact, clean, val })
    }
}

/// Mean PSNR and SSIM (non-metal pixels) of a set of HU images against their
/// references.
pub fn mean_metrics(pairs: &[(Tensor, &ValCase)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (out, vc) in pairs {
        p += psnr(out, &vc.truth_hu, Some(&vc.case.mask))?;
        s += ssim(out, &vc.truth_hu, Some(&vc.case.mask))?;
    }
    let n = pairs.len() as f64;
    Ok((p / n, s / n))
}

/// Alternating generator/discriminator training on unpaired batches.
pub struct Trainer {
    pub cfg: RunConfig,
    pub rec: Reconstructor,
    pub nets: NetworkSet,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: RunConfig, rec: Reconstructor, nets: NetworkSet) -> Result<Self> {
        cfg.validate()?;
        if nets.snet.gate != cfg.gate() {
            return Err(Error::Config("network gate does not match eq4_literal".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM);
        Ok(Trainer { cfg, rec, nets, rng, epoch: 0 })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One generator update followed by one discriminator update.
    pub fn step(&mut self, batch: &Batch) -> Result<StepLosses> {
        let cfg = &self.cfg;
        if cfg.use_pnet && batch.s_a_p.is_none() {
            return Err(Error::invalid("use_pnet is set but the batch carries no prior sinograms"));
        }
        let active = cfg.active_losses();
        let on = |t: LossTerm| active.contains(&t);
        let weights = Some(&batch.loss_weights);
        let disc_mask = cfg.mask_disc_metal.then(|| batch.loss_weights.map(|w| 1.0 - w));
        let s_c = batch
            .s_c
            .as_ref()
            .ok_or_else(|| Error::invalid("training batches need clean partners"))?;

        let mut g = Graph::new();
        let gens = Generators::bind(&mut g, &self.nets, cfg.use_snet, true);
        let one = phase1(&mut g, &self.rec, &gens, batch)?;
        let two = phase2(&mut g, &self.rec, &gens, batch, &one)?;
        let mut lv = LossVars {
            cycle: Some(loss_cycle(&mut g, one.i_a, two.i_aca, two.i_c, two.i_cac, weights)?),
            ..LossVars::default()
        };
        if on(LossTerm::Art) {
            lv.art = Some(loss_art(&mut g, one.a_s, two.a_s, one.a_i, two.a_i, weights)?);
        }
        if on(LossTerm::Fed) {
            let s_ca_se = two.s_ca_se.ok_or_else(|| Error::Config("fidelity loss needs S-Net".into()))?;
            let s_c = g.constant(s_c.clone());
            lv.fed = Some(loss_fed(&mut g, s_ca_se, s_c, two.i_ca_se, two.i_c, weights)?);
        }
        if on(LossTerm::Prior) {
            let s_p = one.s_a_p.ok_or_else(|| Error::Config("prior loss needs P-Net".into()))?;
            lv.prior = Some(loss_prior(&mut g, s_p, one.s_a_se, one.i_a_se, one.i_ac, &cfg.weights, weights)?);
        }
        let (da, dc) = (&self.nets.disc_a, &self.nets.disc_c);
        if on(LossTerm::Adv) {
            let pa = self.nets.disc_a_params.bind(&mut g, false);
            let pc = self.nets.disc_c_params.bind(&mut g, false);
            let ga = generator_adv(&mut g, da, &pa, two.i_ca, disc_mask.as_ref())?;
            let gc = generator_adv(&mut g, dc, &pc, one.i_ac, disc_mask.as_ref())?;
            lv.adv = Some(g.add(ga, gc)?);
        }
        let total = total_objective(&mut g, &lv, &cfg.weights)?;
        let value = |v: Option<_>| v.map_or(0.0, |v| g.value(v).item() as f64);
        let mut out = StepLosses {
            cycle: value(lv.cycle),
            art: value(lv.art),
            adv_g: value(lv.adv),
            fed: value(lv.fed),
            prior: value(lv.prior),
            total: g.value(total).item() as f64,
            adv_d: 0.0,
        };
        if !out.total.is_finite() {
            return Err(Error::NonFinite("generator loss".into()));
        }
        g.backward(total)?;
        let Generators { snet: snet_b, inet: inet_b, .. } = gens;
        if let Some(b) = &snet_b {
            self.nets.snet_params.collect_grads(&g, b);
        }
        self.nets.inet_params.collect_grads(&g, &inet_b);
        let fake_ca = g.value(two.i_ca).clone();
        let fake_ac = g.value(one.i_ac).clone();
        drop(g);
        if cfg.use_snet {
            adam_step(&mut self.nets.snet_params, &cfg.adam)?;
        }
        adam_step(&mut self.nets.inet_params, &cfg.adam)?;

        if on(LossTerm::Adv) {
            let i_c = batch.i_c.as_ref().expect("checked with s_c");
            let mut g = Graph::new();
            let pa = self.nets.disc_a_params.bind(&mut g, true);
            let pc = self.nets.disc_c_params.bind(&mut g, true);
            let (real_a, fake_a) = (g.constant(batch.i_a.clone()), g.constant(fake_ca));
            let (real_c, fake_c) = (g.constant(i_c.clone()), g.constant(fake_ac));
            let la = discriminator_adv(&mut g, da, &pa, real_a, fake_a, disc_mask.as_ref())?;
            let lc = discriminator_adv(&mut g, dc, &pc, real_c, fake_c, disc_mask.as_ref())?;
            let ld = g.add(la, lc)?;
            out.adv_d = g.value(ld).item() as f64;
            if !out.adv_d.is_finite() {
                return Err(Error::NonFinite("discriminator loss".into()));
            }
            g.backward(ld)?;
            self.nets.disc_a_params.collect_grads(&g, &pa);
            self.nets.disc_c_params.collect_grads(&g, &pc);
            adam_step(&mut self.nets.disc_a_params, &cfg.adam)?;
            adam_step(&mut self.nets.disc_c_params, &cfg.adam)?;
        }
        if !self.nets.is_finite() {
            return Err(Error::NonFinite("parameter update".into()));
        }
        Ok(out)
    }

    /// Draws the batches of the next epoch: every artifact case once, each
    /// paired with an independently drawn clean case.
    pub fn plan_epoch(&mut self, n_artifact: usize, n_clean: usize) -> Vec<Vec<(usize, usize)>> {
        let mut order: Vec<usize> = (0..n_artifact).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.cfg.batch_size)
            .map(|chunk| chunk.iter().map(|&a| (a, self.rng.random_range(0..n_clean))).collect())
            .collect()
    }

    /// Runs one epoch; on a non-finite step the parameters from before that
    /// step are restored and written to `rescue_dir` (if given) before the
    /// error is returned.
    pub fn train_epoch(&mut self, data: &TrainingData, rescue_dir: Option<&Path>) -> Result<StepLosses> {
        if data.artifact.is_empty() || data.clean.is_empty() {
            return Err(Error::invalid("training needs artifact and clean cases"));
        }
        let plan = self.plan_epoch(data.artifact.len(), data.clean.len());
        let mut sum = StepLosses::default();
        for pairs in &plan {
            let arts: Vec<&ArtifactCase> = pairs.iter().map(|&(a, _)| &data.artifact[a]).collect();
            let cleans: Vec<&CleanCase> = pairs.iter().map(|&(_, c)| &data.clean[c]).collect();
            let batch = Batch::new(&arts, &cleans)?;
            let last_good = self.nets.clone();
            match self.step(&batch) {
                Ok(l) => sum.accumulate(&l),
                Err(Error::NonFinite(stage)) => {
                    self.nets = last_good;
                    if let Some(dir) = rescue_dir {
                        self.nets.save(dir)?;
                        warn!("non-finite values at {stage}; last good checkpoint in {}", dir.display());
                    }
                    return Err(Error::NonFinite(stage));
                }
                Err(e) => return Err(e),
            }
        }
        self.epoch += 1;
        Ok(sum.scaled(1.0 / plan.len() as f64))
    }

    /// Mean validation PSNR/SSIM of the current Phase I output.
    pub fn validate(&self, val: &[ValCase]) -> Result<(f64, f64)> {
        let outs = parallel_map(val.len(), |i| -> Result<Tensor> {
            let inf = infer_case(&self.rec, &self.nets, self.cfg.use_snet, &val[i].case)?;
            hu_from_mu(&self.rec.denormalize(&inf.i_ac), self.rec.mu_water() as f64)
        });
        let pairs = outs
            .into_iter()
            .zip(val)
            .map(|(o, v)| Ok((o?, v)))
            .collect::<Result<Vec<_>>>()?;
        mean_metrics(&pairs)
    }
}

/// Files written by [`train`].
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint")
    }
    pub fn last_good(&self) -> PathBuf {
        self.root.join("last_good")
    }

    /// The run's configuration and its latest checkpoint.
    pub fn load(&self) -> Result<(RunConfig, NetworkSet)> {
        let config = self.config();
        if !config.is_file() {
            return Err(Error::invalid(format!("{} is not a training run (no config.txt)", self.root.display())));
        }
        let cfg = RunConfig::load(config)?;
        let mut nets = NetworkSet::new(cfg.networks, cfg.gate(), cfg.seed)?;
        nets.load(self.checkpoint())?;
        Ok((cfg, nets))
    }
}

/// Full training run: `cfg.epochs` epochs with validation after each, the
/// metrics log appended per epoch and the latest parameters checkpointed.
pub fn train(
    cfg: &RunConfig,
    rec: &Reconstructor,
    nets: NetworkSet,
    data: &TrainingData,
    out: Option<&RunLayout>,
) -> Result<(NetworkSet, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(cfg.clone(), rec.clone(), nets)?;
    let mut log = match out {
        Some(layout) => {
            fs::create_dir_all(&layout.root)?;
            fs::write(layout.config(), cfg.to_text())?;
            let mut f = File::create(layout.metrics())?;
            writeln!(f, "{METRICS_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let rescue = out.map(RunLayout::last_good);
        let losses = trainer.train_epoch(data, rescue.as_deref())?;
        let (psnr, ssim) = trainer.validate(&data.val)?;
        let record = EpochRecord { epoch: trainer.epoch(), psnr, ssim, losses };
        info!("{}", record.to_csv_row());
        if let (Some(f), Some(layout)) = (log.as_mut(), out) {
            writeln!(f, "{}", record.to_csv_row())?;
            f.flush()?;
            trainer.nets.save(layout.checkpoint())?;
        }
        records.push(record);
    }
    Ok((trainer.nets, records))
}

/// Adam settings for a given learning rate with default moments.
pub(crate) fn adam_with_lr(lr: f32) -> AdamConfig {
    AdamConfig { lr, ..AdamConfig::default() }
}
