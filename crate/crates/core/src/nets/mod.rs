//! The restorator, critic, evaluator and feature networks, their losses,
//! and patch-weighted image scoring.

pub mod config;
mod critic;
mod featnet;
pub mod gradcheck;
pub mod losses;
mod restorator;
mod score;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ran_tensor::params::{RUNNING_MEAN, RUNNING_VAR};
use ran_tensor::{load_checkpoint, save_checkpoint, BatchNorm, ParamStore, Scalar, Tensor};

pub use config::{AdvMode, Aggregate, NetworkConfig, RecLoss};
pub use critic::{Discriminator, EvalOutput, Evaluator, Trunk, WEIGHT_FLOOR};
pub use featnet::FeatureNet;
pub use restorator::Restorator;
pub use score::{aggregate, evaluate_patches, score_image, PatchScore, QualityReport};

use crate::error::{RanError, Result};

pub const RESTORATOR: &str = "restorator";
pub const DISCRIMINATOR: &str = "discriminator";
pub const EVALUATOR: &str = "evaluator";
pub const FEATNET: &str = "featnet";
/// Text file next to the checkpoints listing completed training phases.
pub const PHASES_FILE: &str = "phases.txt";

/// `gamma = 1`, `beta = 0` and running statistics at mean 0, variance 1, so a
/// fresh network can already run in inference mode.
pub(crate) fn init_bn<T: Scalar>(bn: &BatchNorm, store: &mut ParamStore<T>) -> Result<()> {
    bn.init(store)?;
    store.insert(format!("{}/{RUNNING_MEAN}", bn.name), Tensor::zeros(&[bn.channels]))?;
    store.insert(format!("{}/{RUNNING_VAR}", bn.name), Tensor::ones(&[bn.channels]))?;
    Ok(())
}

/// All four networks with their parameters.
#[derive(Debug, Clone)]
pub struct RanModel {
    pub cfg: NetworkConfig,
    pub restorator: Restorator,
    pub discriminator: Discriminator,
    pub evaluator: Evaluator,
    pub featnet: FeatureNet,
    pub r_params: ParamStore,
    pub d_params: ParamStore,
    pub e_params: ParamStore,
    pub f_params: ParamStore,
    /// Training phases (1 to 4) applied to these weights.
    pub phases_done: BTreeSet<u8>,
}

fn file_for(dir: &Path, prefix: &str) -> std::path::PathBuf {
    dir.join(format!("{prefix}.ckpt"))
}

/// Names and dims of `loaded` must match a freshly initialized `expected`.
fn check_layout(prefix: &str, expected: &ParamStore, loaded: &ParamStore) -> Result<()> {
    let a: Vec<(&str, &[usize])> = expected.iter().map(|(n, t)| (n, t.dims())).collect();
    let b: Vec<(&str, &[usize])> = loaded.iter().map(|(n, t)| (n, t.dims())).collect();
    if a != b {
        let missing = a.iter().find(|e| !b.contains(e)).map(|e| e.0);
        let extra = b.iter().find(|e| !a.contains(e)).map(|e| e.0);
        return Err(RanError::Format(format!(
            "{prefix} checkpoint does not match the network config (first missing {missing:?}, first unexpected {extra:?})"
        )));
    }
    Ok(())
}

impl RanModel {
    /// Fresh networks; each is initialized from its own stream derived from `seed`.
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let restorator = Restorator::new(&cfg);
        let discriminator = Discriminator::new(&cfg);
        let evaluator = Evaluator::new(&cfg);
        let (featnet, f_params) = FeatureNet::build(&cfg)?;
        let mut r_params = ParamStore::new();
        restorator.init(&mut r_params, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x0001))?;
        let mut d_params = ParamStore::new();
        discriminator.init(&mut d_params, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x0002))?;
        let mut e_params = ParamStore::new();
        evaluator.init(&mut e_params, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x0003))?;
        Ok(Self {
            cfg,
            restorator,
            discriminator,
            evaluator,
            featnet,
            r_params,
            d_params,
            e_params,
            f_params,
            phases_done: BTreeSet::new(),
        })
    }

    pub fn stores(&self) -> [(&'static str, &ParamStore); 4] {
        [
            (RESTORATOR, &self.r_params),
            (DISCRIMINATOR, &self.d_params),
            (EVALUATOR, &self.e_params),
            (FEATNET, &self.f_params),
        ]
    }

    /// Writes `<dir>/{restorator,discriminator,evaluator,featnet}.ckpt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| RanError::io(dir, e))?;
        for (prefix, store) in self.stores() {
            save_checkpoint(store, file_for(dir, prefix))?;
        }
        let phases: Vec<String> = self.phases_done.iter().map(u8::to_string).collect();
        let path = dir.join(PHASES_FILE);
        std::fs::write(&path, phases.join(",") + "\n").map_err(|e| RanError::io(&path, e))
    }

    /// Load the four checkpoints written by [`RanModel::save`] for networks built from `cfg`.
    pub fn load(cfg: NetworkConfig, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut model = Self::new(cfg, 0)?;
        for (prefix, slot) in [
            (RESTORATOR, &mut model.r_params),
            (DISCRIMINATOR, &mut model.d_params),
            (EVALUATOR, &mut model.e_params),
            (FEATNET, &mut model.f_params),
        ] {
            let loaded: ParamStore = load_checkpoint(file_for(dir, prefix))?;
            check_layout(prefix, slot, &loaded)?;
            *slot = loaded;
        }
        let path = dir.join(PHASES_FILE);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| RanError::io(&path, e))?;
            for tok in text.trim().split(',').filter(|t| !t.is_empty()) {
                let p: u8 = tok
                    .parse()
                    .ok()
                    .filter(|p| (1..=4).contains(p))
                    .ok_or_else(|| RanError::Format(format!("bad phase {tok:?} in {}", path.display())))?;
                model.phases_done.insert(p);
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use ran_tensor::{clip_weights, Graph, Mode};

    use super::*;
    use crate::image::{batch_tensor, ImagePlane};

    fn tiny() -> NetworkConfig {
        let mut cfg = NetworkConfig::desk();
        cfg.patch_size = 16;
        cfg.restorator.channels = 6;
        cfg.discriminator.stage_channels = vec![4, 4, 6, 6];
        cfg.discriminator.fc_widths = vec![5, 1];
        cfg.evaluator.fused_width = 12;
        cfg.evaluator.head_widths = vec![5, 1];
        cfg.feature_net.channels = vec![3, 4, 4, 5, 5];
        cfg
    }

    fn patches(n: usize, size: usize, seed: usize) -> Vec<ImagePlane> {
        (0..n)
            .map(|k| {
                ImagePlane::from_fn(size, size, |c, x, y| {
                    (((x * 7 + y * 3 + c * 11 + k * 5 + seed) % 17) as f32 / 16.0) * 0.8 + 0.1
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn restorator_preserves_shape() {
        let m = RanModel::new(tiny(), 1).unwrap();
        for (w, h) in [(16, 16), (13, 9), (1, 1)] {
            let x = ImagePlane::filled(w, h, [0.3, 0.5, 0.7]).unwrap();
            let mut g = Graph::new();
            let xv = g.input(batch_tensor(&[&x]).unwrap());
            let y = m.restorator.forward(&mut g, &m.r_params, xv, Mode::Train).unwrap();
            assert_eq!(g.value(y).dims(), &[1, 3, h, w]);
        }
    }

    #[test]
    fn identity_restorator_passes_through() {
        let mut m = RanModel::new(tiny(), 2).unwrap();
        m.restorator.set_identity(&mut m.r_params).unwrap();
        let ps = patches(3, 16, 0);
        let refs: Vec<&ImagePlane> = ps.iter().collect();
        assert_eq!(m.restorator.restore(&m.r_params, &refs).unwrap(), ps);
    }

    #[test]
    fn fresh_restorator_starts_near_pass_through() {
        let m = RanModel::new(NetworkConfig::desk(), 5).unwrap();
        let ps = patches(4, 32, 2);
        let refs: Vec<&ImagePlane> = ps.iter().collect();
        for (a, b) in m.restorator.restore(&m.r_params, &refs).unwrap().iter().zip(&ps) {
            assert!(crate::metrics::psnr(a, b).unwrap() > 30.0);
        }
    }

    #[test]
    fn critic_output_is_unbounded_scalar() {
        let mut m = RanModel::new(tiny(), 3).unwrap();
        let ps = patches(4, 16, 1);
        let refs: Vec<&ImagePlane> = ps.iter().collect();
        let run = |m: &RanModel| {
            let mut g = Graph::new();
            let x = g.input(batch_tensor(&refs).unwrap());
            let d = m.discriminator.forward(&mut g, &m.d_params, x, Mode::Train).unwrap();
            g.value(d).clone()
        };
        let base = run(&m);
        assert_eq!(base.dims(), &[4, 1]);
        let name = m.discriminator.last_weight_name();
        let w = m.d_params.get_mut(&name).unwrap();
        *w = w.map(|v| v * 1000.0);
        let big = run(&m);
        assert!(big.max_abs() > 1.0);
        clip_weights(&mut m.d_params, 0.05).unwrap();
        let max = m.d_params.trainable().map(|(_, t)| t.max_abs()).fold(0.0f32, f32::max);
        assert!(max as f64 <= 0.05 && max >= 0.05f32.next_down());
    }

    #[test]
    fn evaluator_shapes_weights_and_order() {
        let m = RanModel::new(NetworkConfig::desk(), 4).unwrap();
        let (a, b) = (patches(2, 32, 2), patches(2, 32, 9));
        let (ar, br): (Vec<&ImagePlane>, Vec<&ImagePlane>) = (a.iter().collect(), b.iter().collect());
        let mut g = Graph::new();
        let (x, y) = (g.input(batch_tensor(&ar).unwrap()), g.input(batch_tensor(&br).unwrap()));
        let out = m.evaluator.forward(&mut g, &m.e_params, x, y, Mode::Infer).unwrap();
        assert_eq!(g.value(out.fused).dims(), &[2, 128]);
        assert!(g.value(out.w).data().iter().all(|&w| w > 0.0));
        let swapped = m.evaluator.forward(&mut g, &m.e_params, y, x, Mode::Infer).unwrap();
        assert_ne!(g.value(out.s).data(), g.value(swapped.s).data());
    }

    #[test]
    fn full_width_evaluator_fuses_1024() {
        let cfg = NetworkConfig {
            patch_size: 8,
            ..NetworkConfig::default()
        };
        let m = RanModel::new(cfg, 5).unwrap();
        let p = patches(1, 8, 0);
        let mut g = Graph::new();
        let x = g.input(batch_tensor(&[&p[0]]).unwrap());
        let out = m.evaluator.forward(&mut g, &m.e_params, x, x, Mode::Infer).unwrap();
        assert_eq!(g.value(out.fused).dims(), &[1, 1024]);
    }

    #[test]
    fn featnet_taps_halve_and_are_seeded() {
        let cfg = NetworkConfig::default();
        let (net, a) = FeatureNet::build::<f32>(&cfg).unwrap();
        let (_, b) = FeatureNet::build::<f32>(&cfg).unwrap();
        assert_eq!(a, b);
        let img = ImagePlane::filled(64, 64, [0.2, 0.4, 0.6]).unwrap();
        let mut g = Graph::new();
        let x = g.input(batch_tensor(&[&img]).unwrap());
        let taps = net.forward(&mut g, &a, x).unwrap();
        let sizes: Vec<usize> = taps.iter().map(|&t| g.value(t).dims()[2]).collect();
        assert_eq!(sizes, vec![64, 32, 16, 8, 4]);
    }

    #[test]
    fn save_load_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RanModel::new(tiny(), 6).unwrap();
        m.phases_done.extend([1, 2]);
        m.save(dir.path()).unwrap();
        let back = RanModel::load(tiny(), dir.path()).unwrap();
        assert_eq!(back.stores(), m.stores());
        assert_eq!(back.phases_done, m.phases_done);
        let mut other = tiny();
        other.restorator.n_blocks = 3;
        assert!(matches!(RanModel::load(other, dir.path()), Err(RanError::Format(_))));
    }
}
