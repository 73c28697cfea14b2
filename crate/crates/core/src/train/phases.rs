//! The four training phases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ran_tensor::{
    clip_weights, commit_batch_stats, optimizer_step, BatchStats, Graph, Mode, Optimizer, ParamStore, Tensor,
};
use serde::Serialize;

use super::config::TrainConfig;
use super::curve::Curve;
use super::data::{sample_batch, Dataset, PatchPair, Split};
use crate::error::{RanError, Result};
use crate::image::{batch_tensor, ImagePlane};
use crate::metrics::{patch_pseudo_labels, PatchLabel};
use crate::nets::losses::{
    critic_loss, evaluator_loss_imagewise, evaluator_loss_patchwise, reconstruction_loss, restorator_adv_loss,
};
use crate::nets::{aggregate, evaluate_patches, AdvMode, RanModel, DISCRIMINATOR, EVALUATOR, RESTORATOR};
use crate::patches::extract_patches;
use crate::stats::srocc;

/// Patches per inference call when restoring or scoring in bulk.
const CHUNK: usize = 64;

pub(crate) fn phase_rng(cfg: &TrainConfig, phase: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(phase);
    rng
}

/// Commit the batch statistics of layers under `prefix`, dropping the rest.
fn commit_prefixed(store: &mut ParamStore, stats: Vec<(String, BatchStats<f32>)>, prefix: &str) -> Result<()> {
    let own = stats.into_iter().filter(|(k, _)| k.starts_with(prefix)).collect();
    Ok(commit_batch_stats(store, own)?)
}

fn stack<'a, T: 'a>(items: &'a [T], idx: &[usize], pick: impl Fn(&'a T) -> &'a ImagePlane) -> Result<Tensor<f32>> {
    let imgs: Vec<&ImagePlane> = idx.iter().map(|&i| pick(&items[i])).collect();
    batch_tensor(&imgs)
}

fn require_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(RanError::Argument(format!("{what} is empty")));
    }
    Ok(())
}

fn max_abs_trainable(store: &ParamStore) -> f64 {
    store
        .trainable()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.abs() as f64))
        .fold(0.0, f64::max)
}

/// Restore patches in inference mode, `CHUNK` at a time.
pub fn restore_all(model: &RanModel, patches: &[&ImagePlane]) -> Result<Vec<ImagePlane>> {
    let mut out = Vec::with_capacity(patches.len());
    for c in patches.chunks(CHUNK) {
        out.extend(model.restorator.restore(&model.r_params, c)?);
    }
    Ok(out)
}

/// Pretrain the restorator on aligned (distorted, pristine) pairs with Adam.
pub fn phase1_pretrain_restorator(model: &mut RanModel, cfg: &TrainConfig, pairs: &[PatchPair]) -> Result<Curve> {
    cfg.validate()?;
    require_nonempty(pairs, "phase-1 patch corpus")?;
    let mut rng = phase_rng(cfg, 1);
    let mut curve = Curve::new("phase1_rec_loss");
    for it in 0..cfg.phase1_iters {
        let idx = sample_batch(&mut rng, pairs.len(), cfg.batch_size);
        let mut g = Graph::new();
        let x = g.input(stack(pairs, &idx, |p| &p.distorted)?);
        let y = g.input(stack(pairs, &idx, |p| &p.pristine)?);
        let r = model.restorator.forward(&mut g, &model.r_params, x, Mode::Train)?;
        let loss = reconstruction_loss(&mut g, model.cfg.rec_loss, &model.featnet, &model.f_params, y, r)?;
        let grads = g.backward(loss, &model.r_params)?;
        optimizer_step(Optimizer::adam(), &mut model.r_params, &grads, cfg.phase1_lr)?;
        commit_prefixed(&mut model.r_params, g.take_batch_stats(), RESTORATOR)?;
        curve.push(it, grads.loss);
    }
    model.phases_done.insert(1);
    Ok(curve)
}

/// Instrumentation of the adversarial phase.
#[derive(Debug, Clone, Serialize)]
pub struct Phase2Report {
    pub restorator_updates: usize,
    pub critic_updates: usize,
    /// Critic updates preceding each restorator update.
    pub critic_updates_per_iteration: Vec<u32>,
    /// Largest |value| over critic parameters, checked after every critic update.
    pub max_abs_critic_param: f64,
    /// `(iteration, lr)` at the start and at every change.
    pub lr_schedule: Vec<(usize, f64)>,
    pub rec_loss: Curve,
    pub adv_loss: Curve,
    pub critic_loss: Curve,
    /// Mean inference-mode critic output on pristine and on restored patches at the end.
    pub final_d_real: f64,
    pub final_d_fake: f64,
}

/// Alternate `critic_steps` critic updates (each followed by weight clipping)
/// with one restorator update, both under RMSProp.
pub fn phase2_adversarial(model: &mut RanModel, cfg: &TrainConfig, pairs: &[PatchPair]) -> Result<Phase2Report> {
    cfg.validate()?;
    if !model.phases_done.contains(&1) {
        return Err(RanError::State("phase 2 needs a phase-1 restorator".into()));
    }
    require_nonempty(pairs, "phase-2 patch corpus")?;
    let adv = model.cfg.adv_mode;
    let (lam_per, lam_adv) = (model.cfg.lambda_per as f32, model.cfg.lambda_adv as f32);
    // Adam moments from phase 1 mean nothing to RMSProp.
    model.r_params.reset_optimizer_state();
    let mut rng = phase_rng(cfg, 2);
    let total = cfg.phase2_iters + cfg.phase2_low_lr_iters;
    let mut rep = Phase2Report {
        restorator_updates: 0,
        critic_updates: 0,
        critic_updates_per_iteration: Vec::with_capacity(total),
        max_abs_critic_param: 0.0,
        lr_schedule: Vec::new(),
        rec_loss: Curve::new("phase2_rec_loss"),
        adv_loss: Curve::new("phase2_adv_loss"),
        critic_loss: Curve::new("phase2_critic_loss"),
        final_d_real: f64::NAN,
        final_d_fake: f64::NAN,
    };
    for it in 0..total {
        let lr = if it < cfg.phase2_iters { cfg.phase2_lr } else { cfg.phase2_low_lr };
        if rep.lr_schedule.last().is_none_or(|&(_, l)| l != lr) {
            rep.lr_schedule.push((it, lr));
        }
        let mut critic_here = 0u32;
        if adv != AdvMode::None {
            for _ in 0..cfg.critic_steps {
                let idx = sample_batch(&mut rng, pairs.len(), cfg.batch_size);
                let fake = {
                    let mut g = Graph::new();
                    g.freeze(RESTORATOR);
                    let x = g.input(stack(pairs, &idx, |p| &p.distorted)?);
                    let r = model.restorator.forward(&mut g, &model.r_params, x, Mode::Train)?;
                    g.value(r).clone()
                };
                let mut g = Graph::new();
                let real = g.input(stack(pairs, &idx, |p| &p.pristine)?);
                let fake = g.input(fake);
                let both = g.concat_batch(real, fake)?;
                let d = model.discriminator.forward(&mut g, &model.d_params, both, Mode::Train)?;
                let n = idx.len();
                let (dr, df) = (g.slice_batch(d, 0, n)?, g.slice_batch(d, n, n)?);
                let loss = critic_loss(&mut g, dr, df, adv)?.expect("adversarial mode has a critic loss");
                let grads = g.backward(loss, &model.d_params)?;
                optimizer_step(Optimizer::rmsprop(), &mut model.d_params, &grads, lr)?;
                commit_prefixed(&mut model.d_params, g.take_batch_stats(), DISCRIMINATOR)?;
                clip_weights(&mut model.d_params, cfg.clip)?;
                rep.max_abs_critic_param = rep.max_abs_critic_param.max(max_abs_trainable(&model.d_params));
                rep.critic_loss.push(it, grads.loss);
                rep.critic_updates += 1;
                critic_here += 1;
            }
        }
        rep.critic_updates_per_iteration.push(critic_here);

        let idx = sample_batch(&mut rng, pairs.len(), cfg.batch_size);
        let mut g = Graph::new();
        g.freeze(DISCRIMINATOR);
        let x = g.input(stack(pairs, &idx, |p| &p.distorted)?);
        let y = g.input(stack(pairs, &idx, |p| &p.pristine)?);
        let r = model.restorator.forward(&mut g, &model.r_params, x, Mode::Train)?;
        let rec = reconstruction_loss(&mut g, model.cfg.rec_loss, &model.featnet, &model.f_params, y, r)?;
        rep.rec_loss.push(it, g.value(rec).data()[0] as f64);
        let mut loss = g.scale(rec, lam_per)?;
        if adv != AdvMode::None {
            let n = idx.len();
            let both = g.concat_batch(y, r)?;
            let d = model.discriminator.forward(&mut g, &model.d_params, both, Mode::Train)?;
            let df = g.slice_batch(d, n, n)?;
            let a = restorator_adv_loss(&mut g, df, adv)?.expect("adversarial mode has a generator loss");
            rep.adv_loss.push(it, g.value(a).data()[0] as f64);
            let a = g.scale(a, lam_adv)?;
            loss = g.add(loss, a)?;
        }
        let grads = g.backward(loss, &model.r_params)?;
        optimizer_step(Optimizer::rmsprop(), &mut model.r_params, &grads, lr)?;
        commit_prefixed(&mut model.r_params, g.take_batch_stats(), RESTORATOR)?;
        rep.restorator_updates += 1;
    }
    if adv != AdvMode::None {
        let (real, fake) = critic_separation(model, pairs)?;
        rep.final_d_real = real;
        rep.final_d_fake = fake;
    }
    model.phases_done.insert(2);
    Ok(rep)
}

/// Mean inference-mode critic output on pristine and on restored patches
/// over (at most) the first `CHUNK` pairs.
pub fn critic_separation(model: &RanModel, pairs: &[PatchPair]) -> Result<(f64, f64)> {
    let take = &pairs[..pairs.len().min(CHUNK)];
    let pristine: Vec<&ImagePlane> = take.iter().map(|p| &p.pristine).collect();
    let distorted: Vec<&ImagePlane> = take.iter().map(|p| &p.distorted).collect();
    let restored = restore_all(model, &distorted)?;
    let restored: Vec<&ImagePlane> = restored.iter().collect();
    let mut out = [0.0; 2];
    for (slot, imgs) in out.iter_mut().zip([pristine, restored]) {
        let mut g = Graph::new();
        g.freeze(DISCRIMINATOR);
        let x = g.input(batch_tensor(&imgs)?);
        let d = model.discriminator.forward(&mut g, &model.d_params, x, Mode::Infer)?;
        let v = g.value(d).data();
        *slot = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    }
    Ok((out[0], out[1]))
}

/// A distorted patch, its restoration and its FSIM pseudo-label.
#[derive(Debug, Clone)]
pub struct LabeledPatch {
    pub distorted: ImagePlane,
    pub restored: ImagePlane,
    pub label: PatchLabel,
}

/// Restore every pair with the current restorator and label it against its pristine patch.
pub fn label_patches(model: &RanModel, pairs: &[PatchPair]) -> Result<Vec<LabeledPatch>> {
    let distorted: Vec<&ImagePlane> = pairs.iter().map(|p| &p.distorted).collect();
    let restored = restore_all(model, &distorted)?;
    pairs
        .iter()
        .zip(restored)
        .map(|(p, restored)| {
            Ok(LabeledPatch {
                label: patch_pseudo_labels(&p.distorted, &p.pristine)?,
                distorted: p.distorted.clone(),
                restored,
            })
        })
        .collect()
}

/// Pretrain the evaluator on patch pseudo-labels; the restorator and critic are not touched.
pub fn phase3_pretrain_evaluator(model: &mut RanModel, cfg: &TrainConfig, patches: &[LabeledPatch]) -> Result<Curve> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(RanError::Argument("phase 3 needs labeled patches".into()));
    }
    let mut rng = phase_rng(cfg, 3);
    let mut curve = Curve::new("phase3_patch_loss");
    for it in 0..cfg.phase3_iters {
        let idx = sample_batch(&mut rng, patches.len(), cfg.batch_size);
        let labels: Vec<PatchLabel> = idx.iter().map(|&i| patches[i].label).collect();
        let mut g = Graph::new();
        let d = g.input(stack(patches, &idx, |p| &p.distorted)?);
        let r = g.input(stack(patches, &idx, |p| &p.restored)?);
        let out = model.evaluator.forward(&mut g, &model.e_params, d, r, Mode::Train)?;
        let loss = evaluator_loss_patchwise(&mut g, out.s, out.w, &labels)?;
        let grads = g.backward(loss, &model.e_params)?;
        optimizer_step(Optimizer::adam(), &mut model.e_params, &grads, cfg.phase3_lr)?;
        commit_prefixed(&mut model.e_params, g.take_batch_stats(), EVALUATOR)?;
        curve.push(it, grads.loss);
    }
    model.phases_done.insert(3);
    Ok(curve)
}

/// Patches of one image and their restorations, prepared once because the
/// restorator is frozen from phase 3 on.
#[derive(Debug, Clone)]
pub struct ImagePatches {
    pub record: usize,
    pub distorted: Vec<ImagePlane>,
    pub restored: Vec<ImagePlane>,
}

pub fn prepare_images(model: &RanModel, ds: &Dataset, indices: &[usize]) -> Result<Vec<ImagePatches>> {
    indices
        .iter()
        .map(|&i| {
            let (distorted, _) = extract_patches(&ds.records[i].distorted, model.cfg.patch_size)?;
            let refs: Vec<&ImagePlane> = distorted.iter().collect();
            let restored = restore_all(model, &refs)?;
            Ok(ImagePatches {
                record: i,
                distorted,
                restored,
            })
        })
        .collect()
}

/// Image scores from prepared patches under the model's aggregation mode.
pub fn predict_prepared(model: &RanModel, images: &[ImagePatches]) -> Result<Vec<f64>> {
    images
        .iter()
        .map(|im| {
            let mut scores = Vec::with_capacity(im.distorted.len());
            for (d, r) in im.distorted.chunks(CHUNK).zip(im.restored.chunks(CHUNK)) {
                let d: Vec<&ImagePlane> = d.iter().collect();
                let r: Vec<&ImagePlane> = r.iter().collect();
                scores.extend(evaluate_patches(&model.evaluator, &model.e_params, &d, &r)?);
            }
            aggregate(&scores, model.cfg.aggregate)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase4Report {
    pub train_loss: Curve,
    pub val_srocc: Curve,
    /// Iteration whose weights were kept; `None` when validation never produced a SROCC.
    pub best_iteration: Option<usize>,
    pub best_val_srocc: Option<f64>,
}

/// Fine-tune the evaluator on image-level scores of the training split,
/// keeping the weights with the best validation SROCC.
pub fn phase4_finetune_evaluator(
    model: &mut RanModel,
    cfg: &TrainConfig,
    ds: &Dataset,
    split: &Split,
) -> Result<Phase4Report> {
    cfg.validate()?;
    require_nonempty(&split.train, "phase-4 training split")?;
    let train_y = split.train.iter().map(|&i| ds.score(i)).collect::<Result<Vec<f64>>>()?;
    let val_y = split.val.iter().map(|&i| ds.score(i)).collect::<Result<Vec<f64>>>()?;
    let train = prepare_images(model, ds, &split.train)?;
    let val = prepare_images(model, ds, &split.val)?;
    let mut rng = phase_rng(cfg, 4);
    let mut rep = Phase4Report {
        train_loss: Curve::new("phase4_image_loss"),
        val_srocc: Curve::new("phase4_val_srocc"),
        best_iteration: None,
        best_val_srocc: None,
    };
    let mut best: Option<ParamStore> = None;
    for it in 0..cfg.phase4_iters {
        let idx = sample_batch(&mut rng, train.len(), cfg.images_per_batch);
        let mut d_all: Vec<&ImagePlane> = Vec::new();
        let mut r_all: Vec<&ImagePlane> = Vec::new();
        let mut spans = Vec::with_capacity(idx.len());
        for &i in &idx {
            spans.push((d_all.len(), train[i].distorted.len(), train_y[i]));
            d_all.extend(&train[i].distorted);
            r_all.extend(&train[i].restored);
        }
        let mut g = Graph::new();
        let d = g.input(batch_tensor(&d_all)?);
        let r = g.input(batch_tensor(&r_all)?);
        let out = model.evaluator.forward(&mut g, &model.e_params, d, r, Mode::Train)?;
        let mut total = None;
        for (start, len, y) in spans {
            let s = g.slice_batch(out.s, start, len)?;
            let w = g.slice_batch(out.w, start, len)?;
            let l = evaluator_loss_imagewise(&mut g, s, w, y)?;
            total = Some(match total {
                None => l,
                Some(t) => g.add(t, l)?,
            });
        }
        let total = total.expect("batch holds at least one image");
        let loss = g.scale(total, 1.0 / idx.len() as f32)?;
        let grads = g.backward(loss, &model.e_params)?;
        optimizer_step(Optimizer::adam(), &mut model.e_params, &grads, cfg.phase4_lr)?;
        commit_prefixed(&mut model.e_params, g.take_batch_stats(), EVALUATOR)?;
        rep.train_loss.push(it, grads.loss);

        let done = it + 1;
        if !val.is_empty() && (done % cfg.val_every == 0 || done == cfg.phase4_iters) {
            let pred = predict_prepared(model, &val)?;
            if let Ok(rho) = srocc(&pred, &val_y) {
                rep.val_srocc.push(it, rho);
                if rep.best_val_srocc.is_none_or(|b| rho > b) {
                    rep.best_val_srocc = Some(rho);
                    rep.best_iteration = Some(it);
                    best = Some(model.e_params.clone());
                }
            }
        }
    }
    if let Some(b) = best {
        model.e_params = b;
    }
    model.phases_done.insert(4);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::gen_synthetic_corpus;
    use crate::nets::{NetworkConfig, RecLoss};
    use crate::train::data::split_by_reference;

    fn tiny() -> NetworkConfig {
        let mut cfg = NetworkConfig::desk();
        cfg.patch_size = 16;
        cfg.restorator.channels = 8;
        cfg.discriminator.stage_channels = vec![4, 4, 8, 8];
        cfg.discriminator.fc_widths = vec![8, 1];
        cfg.evaluator.fused_width = 16;
        cfg.evaluator.head_widths = vec![8, 1];
        cfg.feature_net.channels = vec![4, 4, 8, 8, 8];
        cfg
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            phase1_iters: 30,
            phase2_iters: 3,
            phase2_low_lr_iters: 2,
            phase3_iters: 10,
            phase4_iters: 6,
            batch_size: 8,
            images_per_batch: 2,
            val_every: 3,
            phase1_lr: 1e-3,
            phase2_lr: 1e-3,
            phase3_lr: 1e-3,
            phase4_lr: 1e-3,
            ..TrainConfig::default()
        }
    }

    fn toy_pairs() -> (Dataset, Vec<PatchPair>) {
        let ds = Dataset::from_synthetic(&gen_synthetic_corpus(1, 64, 1).unwrap());
        let all: Vec<usize> = (0..ds.len()).collect();
        let pairs = crate::train::patch_pairs(&ds, &all, 16).unwrap();
        (ds, pairs[..64].to_vec())
    }

    #[test]
    fn phase1_learns_and_is_deterministic() {
        let (_, pairs) = toy_pairs();
        let run = || {
            let mut m = RanModel::new(tiny(), 3).unwrap();
            let mut cfg = quick();
            cfg.phase1_iters = 60;
            cfg.batch_size = 64;
            let c = phase1_pretrain_restorator(&mut m, &cfg, &pairs).unwrap();
            (c, m)
        };
        let (c, m) = run();
        // Full-batch loss from a pass-through start: the drop is restoration, not noise.
        let (first, last) = (c.first().unwrap(), c.last().unwrap());
        assert!(last <= 0.85 * first, "{first} -> {last}");
        assert!(m.phases_done.contains(&1));
        let (c2, m2) = run();
        assert_eq!(c, c2);
        assert_eq!(m.r_params, m2.r_params);
        assert!(phase1_pretrain_restorator(&mut RanModel::new(tiny(), 0).unwrap(), &quick(), &[]).is_err());
    }

    #[test]
    fn l2_identity_target_stays_at_zero() {
        let (_, pairs) = toy_pairs();
        let same: Vec<PatchPair> = pairs
            .iter()
            .map(|p| PatchPair {
                record: p.record,
                distorted: p.pristine.clone(),
                pristine: p.pristine.clone(),
            })
            .collect();
        let mut cfg = tiny();
        cfg.rec_loss = RecLoss::L2;
        let mut m = RanModel::new(cfg, 1).unwrap();
        m.restorator.set_identity(&mut m.r_params).unwrap();
        let c = phase1_pretrain_restorator(&mut m, &quick(), &same).unwrap();
        assert!(c.values().iter().all(|&v| v.abs() < 1e-10), "{:?}", c.values());
    }

    #[test]
    fn phase2_schedule_and_clipping() {
        let (_, pairs) = toy_pairs();
        let mut m = RanModel::new(tiny(), 2).unwrap();
        let cfg = quick();
        assert!(matches!(phase2_adversarial(&mut m, &cfg, &pairs), Err(RanError::State(_))));
        m.phases_done.insert(1);
        let rep = phase2_adversarial(&mut m, &cfg, &pairs).unwrap();
        assert_eq!(rep.restorator_updates, 5);
        assert_eq!(rep.critic_updates, 25);
        assert!(rep.critic_updates_per_iteration.iter().all(|&c| c == 5));
        assert!(rep.max_abs_critic_param <= 0.05);
        assert_eq!(rep.lr_schedule, vec![(0, cfg.phase2_lr), (3, cfg.phase2_low_lr)]);
        assert!(rep.final_d_real.is_finite() && rep.final_d_fake.is_finite());

        let mut cfg_none = tiny();
        cfg_none.adv_mode = AdvMode::None;
        let mut m = RanModel::new(cfg_none, 2).unwrap();
        m.phases_done.insert(1);
        let d_before = m.d_params.clone();
        let rep = phase2_adversarial(&mut m, &cfg, &pairs).unwrap();
        assert_eq!(rep.critic_updates, 0);
        assert!(rep.adv_loss.points.is_empty());
        assert_eq!(m.d_params, d_before);
    }

    #[test]
    fn phase3_freezes_other_networks() {
        let (_, pairs) = toy_pairs();
        let mut m = RanModel::new(tiny(), 4).unwrap();
        let distorted: Vec<&ImagePlane> = pairs.iter().map(|p| &p.distorted).collect();
        let restored = restore_all(&m, &distorted).unwrap();
        let labeled: Vec<LabeledPatch> = pairs
            .iter()
            .zip(restored)
            .enumerate()
            .map(|(k, (p, r))| LabeledPatch {
                distorted: p.distorted.clone(),
                restored: r,
                label: PatchLabel {
                    s0: 0.5 + 0.005 * k as f64,
                    w0: 0.2,
                },
            })
            .collect();
        let (r0, d0) = (
            ran_tensor::checkpoint::encode(&m.r_params),
            ran_tensor::checkpoint::encode(&m.d_params),
        );
        let c = phase3_pretrain_evaluator(&mut m, &quick(), &labeled).unwrap();
        assert_eq!(c.points.len(), 10);
        assert_eq!(ran_tensor::checkpoint::encode(&m.r_params), r0);
        assert_eq!(ran_tensor::checkpoint::encode(&m.d_params), d0);
        let d: Vec<&ImagePlane> = labeled.iter().map(|p| &p.distorted).collect();
        let r: Vec<&ImagePlane> = labeled.iter().map(|p| &p.restored).collect();
        let scores = evaluate_patches(&m.evaluator, &m.e_params, &d, &r).unwrap();
        assert!(scores.iter().all(|p| p.w > 0.0));
        assert!(phase3_pretrain_evaluator(&mut m, &quick(), &[]).is_err());
    }

    #[test]
    fn phase4_needs_scores_and_keeps_test_sealed() {
        let ds = Dataset::from_synthetic(&gen_synthetic_corpus(5, 64, 6).unwrap());
        let cfg = quick();
        let split = split_by_reference(&ds, &cfg.split).unwrap();
        let mut m = RanModel::new(tiny(), 5).unwrap();
        let r0 = m.r_params.clone();
        let rep = phase4_finetune_evaluator(&mut m, &cfg, &ds, &split).unwrap();
        assert_eq!(rep.train_loss.points.len(), 6);
        assert_eq!(rep.val_srocc.points.len(), 2);
        assert!(rep.best_iteration.is_some());
        assert_eq!(split.test_reads(), 0);
        assert_eq!(m.r_params, r0);

        let mut unscored = ds.clone();
        unscored.records[split.train[0]].score = None;
        assert!(phase4_finetune_evaluator(&mut m, &cfg, &unscored, &split).is_err());
    }
}
