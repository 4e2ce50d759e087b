//! Unpaired dual-domain artifact reduction.
//!
//! Phase I splits an artifact-affected image `I_a` into a sinogram-domain
//! component `a_S` (from the S-Net enhanced reprojection) and an image-domain
//! component `a_I` (from the I-Net), giving `I_ac = I_a − a_S − a_I`. Phase II
//! adds both components to an unrelated clean image `I_c`, decomposes the
//! result again and closes the cycle. The losses compare the two passes,
//! with a frozen P-Net inpainting prior guiding the S-Net.

mod config;
mod infer;
mod losses;
mod phases;
mod pretrain;
mod train;

pub use config::{Ablation, LossTerm, LossWeights, RunConfig};
pub use infer::{infer, infer_case, Inference};
pub use losses::{
    discriminator_adv, generator_adv, loss_art, loss_cycle, loss_fed, loss_prior, mask_metal,
    total_objective, LossVars,
};
pub use phases::{
    phase1, phase2, ArtifactCase, Batch, CleanCase, Generators, PhaseOne, PhaseTwo, Reconstructor,
};
pub use pretrain::{
    injected_traces, pretrain_pnet, score_inpainting, trace_l1, InpaintingScore, PretrainConfig,
    INJECTED_MASK_STREAM,
};
pub use train::{
    mean_metrics, train, EpochRecord, RunLayout, StepLosses, Trainer, TrainingData, ValCase,
    METRICS_HEADER,
};
