use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{li_baseline, parallel_map};
use crate::networks::PNet;
use crate::physics::PhantomGenerator;
use crate::tensor::{adam_step, Graph, ParamStore, Tensor};
use crate::tomography::Mask;

use super::phases::Reconstructor;
use super::train::adam_with_lr;

/// Phantom stream used for masks injected during P-Net pretraining.
pub const INJECTED_MASK_STREAM: u64 = 3;
const PRETRAIN_SHUFFLE_STREAM: u64 = 21;

/// Metal traces of masks drawn from the phantom generator for seeds
/// `first_seed..first_seed + count`.
pub fn injected_traces(
    rec: &Reconstructor,
    generator: &PhantomGenerator,
    first_seed: u64,
    count: usize,
) -> Result<Vec<Mask>> {
    parallel_map(count, |i| {
        let mask = generator.metal_mask(first_seed.wrapping_add(i as u64), INJECTED_MASK_STREAM);
        rec.tomography().metal_trace(&mask)
    })
    .into_iter()
    .collect()
}

/// Mean absolute error over trace bins.
pub fn trace_l1(pred: &Tensor, truth: &Tensor, trace: &Mask) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.shape().plane_len() != trace.bits().len() {
        return Err(Error::shape("trace_l1", format!("{} vs {}", pred.shape(), truth.shape())));
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for ((&p, &t), &m) in pred.data().iter().zip(truth.data()).zip(trace.bits()) {
        if m {
            sum += (p as f64 - t as f64).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("trace_l1 on an empty trace"));
    }
    Ok(sum / count as f64)
}

/// Trace-region L1 of P-Net and of linear interpolation on held-out pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InpaintingScore {
    pub pnet: f64,
    pub li: f64,
}

pub fn score_inpainting(
    pnet: &PNet,
    params: &ParamStore,
    sinos: &[Tensor],
    traces: &[Mask],
) -> Result<InpaintingScore> {
    if sinos.is_empty() || sinos.len() != traces.len() {
        return Err(Error::invalid("held-out set needs matching sinograms and traces"));
    }
    let scores = parallel_map(sinos.len(), |i| -> Result<(f64, f64)> {
        let out = pnet.infer(params, &sinos[i], &traces[i])?;
        let li = li_baseline(&sinos[i], &traces[i])?;
        Ok((trace_l1(&out, &sinos[i], &traces[i])?, trace_l1(&li, &sinos[i], &traces[i])?))
    });
    let (mut p, mut l) = (0.0, 0.0);
    for s in scores {
        let (a, b) = s?;
        p += a;
        l += b;
    }
    let n = sinos.len() as f64;
    Ok(InpaintingScore { pnet: p / n, li: l / n })
}

/// Settings of P-Net pretraining.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

/// Trains P-Net to inpaint clean sinograms under injected metal traces with
/// an L1 loss on the trace. Sinogram `i` always carries trace
/// `i % traces.len()`. The step size follows a cosine schedule from `cfg.lr`
/// towards zero. Returns, for each epoch, the trace-region L1 over
/// all training pairs evaluated with the parameters at the end of that epoch.
pub fn pretrain_pnet(
    pnet: &PNet,
    params: &mut ParamStore,
    sinos: &[Tensor],
    traces: &[Mask],
    cfg: &PretrainConfig,
) -> Result<Vec<f64>> {
    if sinos.is_empty() || traces.is_empty() {
        return Err(Error::invalid("P-Net pretraining needs clean sinograms and traces"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(PRETRAIN_SHUFFLE_STREAM);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let adam = adam_with_lr(cosine_lr(cfg.lr, epoch, cfg.epochs));
        let mut order: Vec<usize> = (0..sinos.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let picks: Vec<&Mask> = chunk.iter().map(|&i| &traces[i % traces.len()]).collect();
            let batch_sinos: Vec<&Tensor> = chunk.iter().map(|&i| &sinos[i]).collect();
            let prefilled = PNet::prefill(&batch_sinos, &picks)?;
            let trace = Tensor::stack(&picks.iter().map(|m| m.to_tensor()).collect::<Vec<_>>().iter().collect::<Vec<_>>())?;
            let truth = Tensor::stack(&batch_sinos)?;

            let mut g = Graph::new();
            let b = params.bind(&mut g, true);
            let x = g.constant(prefilled);
            let out = pnet.forward(&mut g, &b, x, &trace)?;
            let t = g.constant(truth);
            let diff = g.sub(out, t)?;
            let loss = g.mean_abs(diff, Some(&trace))?;
            let value = g.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite("pnet pretraining".into()));
            }
            g.backward(loss)?;
            params.collect_grads(&g, &b);
            adam_step(params, &adam)?;
            total += value;
            steps += 1;
        }
        let fitted = training_loss(pnet, params, sinos, traces)?;
        info!("pnet epoch {}: running loss {:.6}, end-of-epoch loss {fitted:.6}", epoch + 1, total / steps as f64);
        history.push(fitted);
    }
    Ok(history)
}

/// Mean trace-region L1 over all training pairs with the current parameters.
fn training_loss(pnet: &PNet, params: &ParamStore, sinos: &[Tensor], traces: &[Mask]) -> Result<f64> {
    let losses = parallel_map(sinos.len(), |i| {
        let trace = &traces[i % traces.len()];
        trace_l1(&pnet.infer(params, &sinos[i], trace)?, &sinos[i], trace)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / sinos.len() as f64)
}

/// Cosine decay of the step size over `epochs`, sampled at the start of each
/// epoch so the last epoch still takes small steps.
fn cosine_lr(lr: f32, epoch: usize, epochs: usize) -> f32 {
    let t = epoch as f32 / epochs.max(1) as f32;
    lr * 0.5 * (1.0 + (std::f32::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::cosine_lr;

    #[test]
    fn cosine_schedule_decays_towards_zero() {
        assert_eq!(cosine_lr(1e-3, 0, 5), 1e-3);
        assert!((cosine_lr(1e-3, 4, 5) - 9.55e-5).abs() < 1e-7);
        assert!(cosine_lr(1e-3, 2, 5) < cosine_lr(1e-3, 1, 5));
        assert_eq!(cosine_lr(1e-3, 0, 1), 1e-3);
    }
}
