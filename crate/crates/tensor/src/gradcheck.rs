//! Central finite-difference verification of analytic gradients.
//!
//! The numeric side only ever evaluates forward passes, so it is independent
//! of every backward rule it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::kernels::Padding;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of one gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<28} seed {:<3} max rel err {:.3e} (tol {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seed,
            self.max_rel_err,
            self.tol
        )
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Settings for [`check_inputs`].
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub h: f64,
    pub tol: f64,
    /// Denominator floor for [`rel_err`], so near-zero gradients compare absolutely.
    pub floor: f64,
}

impl FdConfig {
    pub const OPS: FdConfig = FdConfig {
        h: 1e-5,
        tol: 1e-6,
        floor: 1e-6,
    };
}

/// Compare analytic gradients of `build`'s scalar output with respect to each
/// of `inputs` against central differences. Returns the largest relative error.
pub fn check_inputs(
    inputs: &[Tensor<f64>],
    cfg: FdConfig,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        g.value(loss).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let analytic = g.backward_vars(loss, &vars)?;

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..work[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + cfg.h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - cfg.h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * cfg.h);
            worst = worst.max(rel_err(grad.data()[j], numeric, cfg.floor));
        }
    }
    Ok(worst)
}

pub fn randn(dims: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.sample(StandardNormal))
}

/// Random values bounded away from zero, for kinked functions.
pub fn randn_off_zero(dims: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    randn(dims, rng).map(|v: f64| v.signum() * (0.05 + v.abs()))
}

/// `Σ r ⊙ y` for a fixed random `r`: a scalar loss whose gradient probes every
/// output element with a different weight.
pub fn probe_loss<T: Scalar>(g: &mut Graph<T>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let dims = g.value(y).dims().to_vec();
    let r = Tensor::from_fn(&dims, |_| T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)));
    let r = g.input(r);
    let p = g.mul(y, r)?;
    g.sum(p)
}

fn record(name: &str, seed: u64, tol: f64, err: Result<f64>) -> CheckResult {
    let (max_rel_err, passed) = match err {
        Ok(e) => (e, e <= tol),
        Err(_) => (f64::INFINITY, false),
    };
    CheckResult {
        name: name.to_string(),
        seed,
        max_rel_err,
        tol,
        passed,
    }
}

/// Finite-difference checks for every differentiable graph operation at one seed.
pub fn op_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FdConfig::OPS;
    let mut out = Vec::new();

    // Linear in each argument, so the larger step of 1e-3 is exact up to rounding.
    let conv_cfg = FdConfig { h: 1e-3, ..cfg };
    for (label, stride, pad) in [
        ("conv2d same s1", 1, Padding::Same),
        ("conv2d same s2", 2, Padding::Same),
        ("conv2d valid s1", 1, Padding::Valid),
    ] {
        let ins = [randn(&[2, 3, 6, 6], &mut rng), randn(&[4, 3, 3, 3], &mut rng), randn(&[4], &mut rng)];
        let r = check_inputs(&ins, conv_cfg, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            probe_loss(g, y, seed)
        });
        out.push(record(label, seed, cfg.tol, r));
    }

    let ins = [randn_off_zero(&[3, 5], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.leaky_relu(v[0], 0.2)?;
        probe_loss(g, y, seed)
    });
    out.push(record("leaky_relu", seed, cfg.tol, r));

    let ins = [randn(&[3, 2, 3, 3], &mut rng), randn(&[2], &mut rng), randn(&[2], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let (y, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
        probe_loss(g, y, seed)
    });
    out.push(record("batch_norm train", seed, cfg.tol, r));

    let (rm, rv) = (vec![0.3, -0.2], vec![1.5, 0.7]);
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.batch_norm_infer(v[0], v[1], v[2], &rm, &rv, 1e-5)?;
        probe_loss(g, y, seed)
    });
    out.push(record("batch_norm infer", seed, cfg.tol, r));

    let ins = [randn(&[4, 6], &mut rng), randn(&[3, 6], &mut rng), randn(&[3], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.dense(v[0], v[1], Some(v[2]))?;
        probe_loss(g, y, seed)
    });
    out.push(record("dense", seed, cfg.tol, r));

    let ins = [randn(&[2, 3, 2, 2], &mut rng), randn(&[2, 3, 2, 2], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.add(v[0], v[1])?;
        probe_loss(g, y, seed)
    });
    out.push(record("residual_add", seed, cfg.tol, r));

    let ins = [randn(&[2, 3, 2, 2], &mut rng), randn(&[2, 1, 2, 2], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.concat_channels(v[0], v[1])?;
        probe_loss(g, y, seed)
    });
    out.push(record("concat_channels", seed, cfg.tol, r));

    let ins = [randn(&[1, 3, 2, 2], &mut rng), randn(&[2, 3, 2, 2], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.concat_batch(v[0], v[1])?;
        probe_loss(g, y, seed)
    });
    out.push(record("concat_batch", seed, cfg.tol, r));

    let ins = [randn(&[2, 3, 4, 5], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let y = g.global_avg_pool(v[0])?;
        probe_loss(g, y, seed)
    });
    out.push(record("global_avg_pool", seed, cfg.tol, r));

    let ins = [randn_off_zero(&[6], &mut rng), randn_off_zero(&[6], &mut rng)];
    let r = check_inputs(&ins, cfg, |g, v| {
        let a = g.abs(v[0])?;
        let s = g.softplus(v[1])?;
        let d = g.div(a, s)?;
        let m = g.mul(d, v[0])?;
        let q = g.square(m)?;
        let sc = g.scale(q, 0.5)?;
        let sh = g.add_scalar(sc, 1.0)?;
        let part = g.slice_batch(sh, 1, 4)?;
        let l1 = probe_loss(g, part, seed)?;
        let l2 = g.mse(v[0], v[1])?;
        let l = g.sub(l1, l2)?;
        g.mean(l)
    });
    out.push(record("elementwise + reductions", seed, cfg.tol, r));

    out
}
