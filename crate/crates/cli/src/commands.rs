use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use marforge_core::io::{
    build_dataset, export_png, load_metadata, load_tensor, parallel_map, psnr, save_tensor, ssim, CaseImages,
    Dataset, DatasetSpec, Metadata, Split, CHECKSUM_FILE,
};
use marforge_core::networks::NetworkSet;
use marforge_core::physics::{hu_from_mu, Simulator, SpectralModel};
use marforge_core::pipeline::{
    injected_traces, pretrain_pnet, score_inpainting, train as train_run, Reconstructor, RunConfig, RunLayout,
    TrainingData, PretrainConfig,
};
use marforge_core::tomography::Mask;
use marforge_core::{Error, Geometry, Tensor};

use crate::{CliResult, EvalArgs, InferArgs, PretrainArgs, SimulateArgs, TrainArgs};

/// First phantom seeds of the masks injected into training and held-out
/// sinograms during P-Net pretraining; far from any dataset case seed.
const TRAIN_MASK_SEED: u64 = 7_000_000_000;
const HELD_OUT_MASK_SEED: u64 = 8_000_000_000;

/// Header of the `eval` CSV.
pub const EVAL_HEADER: &str = "case,psnr_in,psnr_out,ssim_in,ssim_out";

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let model = match &args.spectrum {
        Some(p) => SpectralModel::load(p)?,
        None => SpectralModel::default(),
    };
    let mut sim = Simulator::new(Geometry::square(args.size, args.angles)?, model)?;
    sim.photons = args.photons;
    let spec = DatasetSpec {
        n_train: args.n_train,
        n_val: args.n_val,
        n_test: args.n_test,
        seed: args.seed,
    };
    let manifest = build_dataset(&args.out, &spec, &sim, args.force)?;
    println!(
        "wrote {} cases to {} (checksums in {CHECKSUM_FILE})",
        manifest.records.len(),
        args.out.display()
    );
    Ok(())
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

/// Adopts the geometry and water reference of the dataset.
fn bind_to_dataset(cfg: &mut RunConfig, dataset: &Dataset) {
    let m = &dataset.manifest;
    if cfg.geometry != m.geometry {
        info!("using the dataset geometry ({}×{}, {} angles)", m.geometry.image_size, m.geometry.image_size, m.geometry.n_angles);
        cfg.geometry = m.geometry;
    }
    cfg.mu_water = m.mu_water as f32;
}

fn clean_sinograms(rec: &Reconstructor, cases: &[CaseImages]) -> CliResult<Vec<Tensor>> {
    let sinos = parallel_map(cases.len(), |i| rec.project(&rec.normalize(&cases[i].i_c)));
    Ok(sinos.into_iter().collect::<Result<_, _>>()?)
}

fn images(split: Vec<(marforge_core::io::CaseRecord, CaseImages)>) -> Vec<CaseImages> {
    split.into_iter().map(|(_, c)| c).collect()
}

/// Pretrains `nets.pnet_params` in place on the clean images of the training
/// split and reports held-out trace-region L1 against linear interpolation.
fn pretrain_on(dataset: &Dataset, cfg: &RunConfig, nets: &mut NetworkSet) -> CliResult<()> {
    let rec = Reconstructor::new(cfg.geometry, cfg.mu_water)?;
    let generator = Simulator::new(cfg.geometry, SpectralModel::default())?.generator().clone();
    let mut train = images(dataset.load_split(Split::Train)?);
    if cfg.max_train_cases > 0 {
        train.truncate(cfg.max_train_cases);
    }
    let sinos = clean_sinograms(&rec, &train)?;
    let traces = injected_traces(&rec, &generator, TRAIN_MASK_SEED, sinos.len())?;
    let pcfg = PretrainConfig {
        epochs: cfg.pnet_epochs,
        lr: cfg.pnet_lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let history = pretrain_pnet(&nets.pnet, &mut nets.pnet_params, &sinos, &traces, &pcfg)?;
    for (e, l) in history.iter().enumerate() {
        info!("pnet epoch {}: trace L1 {l:.5}", e + 1);
    }
    let held = images(dataset.load_split(Split::Val)?);
    if !held.is_empty() {
        let held_sinos = clean_sinograms(&rec, &held)?;
        let held_traces = injected_traces(&rec, &generator, HELD_OUT_MASK_SEED, held_sinos.len())?;
        let score = score_inpainting(&nets.pnet, &nets.pnet_params, &held_sinos, &held_traces)?;
        println!("held-out trace L1: pnet {:.5}, li {:.5}", score.pnet, score.li);
    }
    Ok(())
}

pub fn pretrain(args: &PretrainArgs) -> CliResult<()> {
    let dataset = Dataset::open(&args.data)?;
    let mut cfg = load_config(args.config.as_deref())?;
    bind_to_dataset(&mut cfg, &dataset);
    if let Some(e) = args.epochs {
        cfg.pnet_epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let mut nets = NetworkSet::new(cfg.networks, cfg.gate(), cfg.seed)?;
    pretrain_on(&dataset, &cfg, &mut nets)?;
    nets.pnet_params.save(&args.out)?;
    println!("saved P-Net parameters to {}", args.out.display());
    Ok(())
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let dataset = Dataset::open(&args.data)?;
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(a) = args.ablation {
        cfg = cfg.with_ablation(a);
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    bind_to_dataset(&mut cfg, &dataset);
    cfg.validate()?;
    let layout = RunLayout { root: args.out.clone() };
    if layout.config().exists() {
        return Err(Error::AlreadyExists(args.out.display().to_string()).into());
    }

    let mut nets = NetworkSet::new(cfg.networks, cfg.gate(), cfg.seed)?;
    if cfg.use_pnet {
        match &args.pnet {
            Some(p) => nets.load_pnet(p)?,
            None => {
                info!("no --pnet given; pretraining the prior for {} epochs", cfg.pnet_epochs);
                pretrain_on(&dataset, &cfg, &mut nets)?;
            }
        }
    } else if args.pnet.is_some() {
        warn!("--pnet is ignored: this configuration does not use the prior");
    }
    let rec = Reconstructor::new(cfg.geometry, cfg.mu_water)?;
    let data = TrainingData::load(&dataset, &rec, &nets, &cfg)?;
    info!(
        "training {:?} on {} cases ({} validation) for {} epochs",
        cfg.ablation().map_or("custom".to_string(), |a| a.to_string()),
        data.artifact.len(),
        data.val.len(),
        cfg.epochs
    );
    let (_, records) = train_run(&cfg, &rec, nets, &data, Some(&layout))?;
    if let Some(last) = records.last() {
        println!("epoch {}: validation PSNR {:.2} dB, SSIM {:.4}", last.epoch, last.psnr, last.ssim);
    }
    println!("run written to {}", layout.root.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let dataset = Dataset::open(&args.data)?;
    let split: Split = args.split.parse()?;
    let (cfg, nets) = RunLayout { root: args.run.clone() }.load()?;
    let rec = Reconstructor::new(dataset.manifest.geometry, dataset.manifest.mu_water as f32)?;
    let mu_w = dataset.manifest.mu_water;
    let records: Vec<_> = dataset.manifest.split(split).cloned().collect();
    let rows = parallel_map(records.len(), |i| -> marforge_core::Result<String> {
        let case = dataset.load_case(&records[i])?;
        let out = marforge_core::pipeline::infer(&rec, &nets, cfg.use_snet, &case.i_a, Some(&case.mask))?;
        let truth = hu_from_mu(&case.i_ac, mu_w)?;
        let input = hu_from_mu(&case.i_a, mu_w)?;
        let output = hu_from_mu(&out.i_ac, mu_w)?;
        let m = Some(&case.mask);
        Ok(format!(
            "{},{:.4},{:.4},{:.5},{:.5}",
            records[i].name(),
            psnr(&input, &truth, m)?,
            psnr(&output, &truth, m)?,
            ssim(&input, &truth, m)?,
            ssim(&output, &truth, m)?
        ))
    });
    let mut csv = format!("{EVAL_HEADER}\n");
    for row in rows {
        csv.push_str(&row?);
        csv.push('\n');
    }
    eprintln!("metrics exclude metal pixels and metal-centred SSIM windows");
    match &args.out {
        Some(p) => fs::write(p, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn parse_window(text: &str) -> CliResult<(f32, f32)> {
    let bad = || Error::invalid(format!("window `{text}`: expected lo,hi in HU with lo < hi"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let lo: f32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f32 = hi.trim().parse().map_err(|_| bad())?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(bad().into())
    }
}

pub fn infer(args: &InferArgs) -> CliResult<()> {
    let window = parse_window(&args.window)?;
    let (cfg, nets) = RunLayout { root: args.run.clone() }.load()?;
    let rec = Reconstructor::new(cfg.geometry, cfg.mu_water)?;
    let input = load_tensor(&args.input)?;
    if let Some(units) = load_metadata(&args.input)?.get("units") {
        if units != "mm^-1" {
            return Err(Error::invalid(format!("input is in `{units}`; expected an attenuation image in mm^-1")).into());
        }
    }
    let mask = match &args.mask {
        Some(p) => Some(Mask::from_tensor(&load_tensor(p)?)?),
        None => None,
    };
    let out = marforge_core::pipeline::infer(&rec, &nets, cfg.use_snet, &input, mask.as_ref())?;
    let meta = Metadata::new()
        .with("units", "mm^-1")
        .with("mu_water", cfg.mu_water)
        .with("metal_pixels", out.mask.count());
    save_tensor(&args.out, &out.i_ac, &meta)?;
    if let Some(png) = &args.png {
        let hu = hu_from_mu(&out.i_ac, cfg.mu_water as f64)?;
        export_png(png, &hu, window, Some(&out.mask))?;
    }
    println!(
        "corrected {} ({} metal pixels) -> {}",
        args.input.display(),
        out.mask.count(),
        args.out.display()
    );
    Ok(())
}
