//! End-to-end gradient checks for the four networks.
//!
//! Analytic gradients come from the 32-bit graph; numeric ones from central
//! differences of 64-bit forward passes over a cast copy of the same weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ran_tensor::gradcheck::{rel_err, CheckResult};
use ran_tensor::{Graph, Mode, ParamStore, Scalar, Tensor, Var};

use super::config::{AdvMode, NetworkConfig};
use super::losses::{critic_loss, evaluator_loss_imagewise, evaluator_loss_patchwise, perceptual_loss, restorator_adv_loss};
use super::{RanModel, DISCRIMINATOR, EVALUATOR, RESTORATOR};
use crate::error::Result;
use crate::metrics::PatchLabel;

pub const TOL: f64 = 1e-3;
pub const STEP: f64 = 1e-5;
/// Gradient entries smaller than this fraction of the network's largest
/// gradient are compared in absolute terms.
pub const FLOOR_FRACTION: f64 = 1e-2;
const SAMPLES_PER_TENSOR: usize = 3;
/// Times the step may shrink tenfold when a difference straddles a kink.
const KINK_RETRIES: usize = 2;

/// Small configuration that keeps every structural feature of the desk recipe.
pub fn tiny_config() -> NetworkConfig {
    let mut cfg = NetworkConfig::desk();
    cfg.patch_size = 8;
    cfg.restorator.n_blocks = 2;
    cfg.restorator.channels = 4;
    cfg.discriminator.stage_channels = vec![4, 4, 6, 6];
    cfg.discriminator.fc_widths = vec![5, 1];
    cfg.evaluator.fused_width = 12;
    cfg.evaluator.head_widths = vec![5, 1];
    cfg.feature_net.channels = vec![3, 4, 4, 5, 5];
    cfg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Restorator,
    Critic,
    EvaluatorPatch,
    EvaluatorImage,
}

struct Stores<T: Scalar> {
    r: ParamStore<T>,
    d: ParamStore<T>,
    e: ParamStore<T>,
    f: ParamStore<T>,
}

impl<T: Scalar> Stores<T> {
    fn target_mut(&mut self, t: Target) -> &mut ParamStore<T> {
        match t {
            Target::Restorator => &mut self.r,
            Target::Critic => &mut self.d,
            Target::EvaluatorPatch | Target::EvaluatorImage => &mut self.e,
        }
    }
}

struct Fixture {
    model: RanModel,
    distorted: Tensor<f64>,
    pristine: Tensor<f64>,
    labels: Vec<PatchLabel>,
    target: f64,
}

impl Fixture {
    fn new(seed: u64) -> Result<Self> {
        let model = RanModel::new(tiny_config(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1c7);
        let dims = [2, 3, 8, 8];
        let pristine = Tensor::from_fn(&dims, |_| rng.random_range(0.05..0.95));
        let distorted = Tensor::new(
            dims.to_vec(),
            pristine.data().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect(),
        )?;
        let labels = (0..2)
            .map(|_| PatchLabel {
                s0: rng.random_range(2.0..3.0),
                w0: rng.random_range(2.0..3.0),
            })
            .collect();
        Ok(Self {
            model,
            distorted,
            pristine,
            labels,
            target: rng.random_range(2.0..3.0),
        })
    }

    fn stores<T: Scalar>(&self) -> Stores<T> {
        Stores {
            r: self.model.r_params.cast(),
            d: self.model.d_params.cast(),
            e: self.model.e_params.cast(),
            f: self.model.f_params.cast(),
        }
    }

    fn loss<T: Scalar>(&self, s: &Stores<T>, t: Target) -> Result<(Graph<T>, Var)> {
        let m = &self.model;
        let mut g = Graph::new();
        let x = g.input(self.distorted.cast());
        let p0 = g.input(self.pristine.cast());
        if t != Target::Restorator {
            g.freeze(RESTORATOR);
        }
        if t != Target::Critic {
            g.freeze(DISCRIMINATOR);
        }
        if !matches!(t, Target::EvaluatorPatch | Target::EvaluatorImage) {
            g.freeze(EVALUATOR);
        }
        let restored = m.restorator.forward(&mut g, &s.r, x, Mode::Train)?;
        let loss = match t {
            Target::Restorator => {
                let per = perceptual_loss(&mut g, &m.featnet, &s.f, p0, restored)?;
                let d = m.discriminator.forward(&mut g, &s.d, restored, Mode::Train)?;
                let adv = restorator_adv_loss(&mut g, d, AdvMode::Wgan)?.expect("wgan");
                g.add(per, adv)?
            }
            Target::Critic => {
                let both = g.concat_batch(p0, restored)?;
                let d = m.discriminator.forward(&mut g, &s.d, both, Mode::Train)?;
                let real = g.slice_batch(d, 0, 2)?;
                let fake = g.slice_batch(d, 2, 2)?;
                critic_loss(&mut g, real, fake, AdvMode::Wgan)?.expect("wgan")
            }
            Target::EvaluatorPatch | Target::EvaluatorImage => {
                let out = m.evaluator.forward(&mut g, &s.e, x, restored, Mode::Train)?;
                if t == Target::EvaluatorPatch {
                    evaluator_loss_patchwise(&mut g, out.s, out.w, &self.labels)?
                } else {
                    evaluator_loss_imagewise(&mut g, out.s, out.w, self.target)?
                }
            }
        };
        Ok((g, loss))
    }

    fn check(&self, t: Target, seed: u64) -> Result<f64> {
        let s32 = self.stores::<f32>();
        let (g, loss) = self.loss(&s32, t)?;
        let store = match t {
            Target::Restorator => &s32.r,
            Target::Critic => &s32.d,
            _ => &s32.e,
        };
        let grads = g.backward(loss, store)?;
        let floor = FLOOR_FRACTION * grads.grads.values().map(|t| t.max_abs() as f64).fold(0.0, f64::max);
        let mut s64 = self.stores::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a3b);
        let mut worst = 0.0f64;
        for (name, grad) in &grads.grads {
            for _ in 0..SAMPLES_PER_TENSOR.min(grad.numel()) {
                let j = rng.random_range(0..grad.numel());
                let orig = s64.target_mut(t).get(name).expect("listed").data()[j];
                let mut eval = |v: f64| -> Result<f64> {
                    s64.target_mut(t).get_mut(name).expect("listed").data_mut()[j] = v;
                    let (g, l) = self.loss(&s64, t)?;
                    Ok(g.value(l).item()?)
                };
                let mut central = |h: f64| -> Result<f64> {
                    let up = eval(orig + h)?;
                    let down = eval(orig - h)?;
                    eval(orig)?;
                    Ok((up - down) / (2.0 * h))
                };
                // A step straddling a leaky-ReLU kink disagrees with a ten
                // times smaller one; shrink until two steps agree.
                let mut h = STEP;
                let mut numeric = central(h)?;
                for _ in 0..KINK_RETRIES {
                    h /= 10.0;
                    let finer = central(h)?;
                    if rel_err(finer, numeric, floor) <= TOL / 10.0 {
                        break;
                    }
                    numeric = finer;
                }
                worst = worst.max(rel_err(grad.data()[j] as f64, numeric, floor));
            }
        }
        Ok(worst)
    }
}

/// One result per network objective at the given seed.
pub fn network_suite(seed: u64) -> Vec<CheckResult> {
    let fixture = Fixture::new(seed);
    [
        ("restorator (per + wgan)", Target::Restorator),
        ("discriminator (critic)", Target::Critic),
        ("evaluator (patch-wise)", Target::EvaluatorPatch),
        ("evaluator (image-wise)", Target::EvaluatorImage),
    ]
    .into_iter()
    .map(|(name, t)| {
        let err = fixture.as_ref().map_err(|e| e.to_string()).and_then(|f| f.check(t, seed).map_err(|e| e.to_string()));
        let max_rel_err = err.unwrap_or(f64::INFINITY);
        CheckResult {
            name: name.to_string(),
            seed,
            max_rel_err,
            tol: TOL,
            passed: max_rel_err <= TOL,
        }
    })
    .collect()
}
