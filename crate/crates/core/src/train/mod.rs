//! Four-phase training schedule, splits, the gain-of-restoration experiment
//! and benchmark evaluation.

pub mod config;
pub mod curve;
pub mod data;
pub mod eval;
pub mod gor;
pub mod phases;

pub use config::{SplitSpec, TrainConfig};
pub use curve::Curve;
pub use data::{patch_pairs, sample_batch, split_by_reference, Dataset, ImageRecord, PatchPair, Split};
pub use eval::{benchmark_report, eval_benchmark, repeated_splits_ttest, BenchmarkReport, Predictor, SignificanceReport};
pub use gor::{gor_experiment, restore_image, GorReport, GorRow, GorVerdict, GOR_LEVELS};
pub use phases::{
    critic_separation, label_patches, phase1_pretrain_restorator, phase2_adversarial, phase3_pretrain_evaluator,
    phase4_finetune_evaluator, predict_prepared, prepare_images, restore_all, ImagePatches, LabeledPatch,
    Phase2Report, Phase4Report,
};

use crate::error::Result;
use crate::nets::{NetworkConfig, RanModel};

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub model: RanModel,
    pub split: Split,
    pub phase1: Curve,
    pub phase2: Phase2Report,
    pub phase3: Curve,
    pub phase4: Phase4Report,
}

/// Phases 1 to 4 on `ds`. Phases 1 to 3 see only patches of the training split.
pub fn run_pipeline(net: NetworkConfig, cfg: &TrainConfig, ds: &Dataset) -> Result<PipelineRun> {
    cfg.validate()?;
    let mut model = RanModel::new(net, cfg.seed)?;
    let split = split_by_reference(ds, &cfg.split)?;
    let pairs = patch_pairs(ds, &split.train, model.cfg.patch_size)?;
    let phase1 = phase1_pretrain_restorator(&mut model, cfg, &pairs)?;
    let phase2 = phase2_adversarial(&mut model, cfg, &pairs)?;
    let labeled = label_patches(&model, &pairs)?;
    let phase3 = phase3_pretrain_evaluator(&mut model, cfg, &labeled)?;
    let phase4 = phase4_finetune_evaluator(&mut model, cfg, ds, &split)?;
    Ok(PipelineRun {
        model,
        split,
        phase1,
        phase2,
        phase3,
        phase4,
    })
}
