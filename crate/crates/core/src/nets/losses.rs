use ran_tensor::{Graph, ParamStore, Scalar, Tensor, Var};

use super::config::{AdvMode, Aggregate, RecLoss};
use super::featnet::FeatureNet;
use crate::error::{RanError, Result};
use crate::metrics::PatchLabel;

/// `Σ_i mean((Ω_i(p0) − Ω_i(pr))²)`, averaged over the batch.
pub fn perceptual_loss<T: Scalar>(
    g: &mut Graph<T>,
    net: &FeatureNet,
    store: &ParamStore<T>,
    p0: Var,
    pr: Var,
) -> Result<Var> {
    let fa = net.forward(g, store, p0)?;
    let fb = net.forward(g, store, pr)?;
    let mut total: Option<Var> = None;
    for (a, b) in fa.into_iter().zip(fb) {
        let d = g.mse(a, b)?;
        total = Some(match total {
            Some(t) => g.add(t, d)?,
            None => d,
        });
    }
    total.ok_or_else(|| RanError::State("feature net has no taps".into()))
}

pub fn reconstruction_loss<T: Scalar>(
    g: &mut Graph<T>,
    kind: RecLoss,
    net: &FeatureNet,
    store: &ParamStore<T>,
    p0: Var,
    pr: Var,
) -> Result<Var> {
    match kind {
        RecLoss::Perceptual => perceptual_loss(g, net, store, p0, pr),
        RecLoss::L2 => Ok(g.mse(p0, pr)?),
    }
}

fn check_batch<T: Scalar>(g: &Graph<T>, v: Var) -> Result<()> {
    if g.value(v).numel() == 0 {
        return Err(RanError::Argument("empty critic batch".into()));
    }
    Ok(())
}

/// Loss minimized by the critic, or `None` when adversarial training is off.
pub fn critic_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var, mode: AdvMode) -> Result<Option<Var>> {
    check_batch(g, d_real)?;
    check_batch(g, d_fake)?;
    Ok(match mode {
        AdvMode::Wgan => {
            let f = g.mean(d_fake)?;
            let r = g.mean(d_real)?;
            Some(g.sub(f, r)?)
        }
        AdvMode::Loggan => {
            // −log σ(D(real)) − log(1 − σ(D(fake))) = softplus(−D(real)) + softplus(D(fake)).
            let neg = g.scale(d_real, T::from_f64_lossy(-1.0))?;
            let r = g.softplus(neg)?;
            let r = g.mean(r)?;
            let f = g.softplus(d_fake)?;
            let f = g.mean(f)?;
            Some(g.add(r, f)?)
        }
        AdvMode::None => None,
    })
}

/// Adversarial term of the restorator objective.
pub fn restorator_adv_loss<T: Scalar>(g: &mut Graph<T>, d_fake: Var, mode: AdvMode) -> Result<Option<Var>> {
    check_batch(g, d_fake)?;
    Ok(match mode {
        AdvMode::Wgan => {
            let m = g.mean(d_fake)?;
            Some(g.scale(m, T::from_f64_lossy(-1.0))?)
        }
        AdvMode::Loggan => {
            let neg = g.scale(d_fake, T::from_f64_lossy(-1.0))?;
            let s = g.softplus(neg)?;
            Some(g.mean(s)?)
        }
        AdvMode::None => None,
    })
}

/// `(critic_loss, restorator_adv_loss)`; both are constant zero when `mode` is `None`.
pub fn adversarial_losses<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var, mode: AdvMode) -> Result<(Var, Var)> {
    let c = critic_loss(g, d_real, d_fake, mode)?;
    let r = restorator_adv_loss(g, d_fake, mode)?;
    let mut zero = || g.input(Tensor::scalar(T::zero()));
    let c = c.unwrap_or_else(&mut zero);
    let r = r.unwrap_or_else(&mut zero);
    Ok((c, r))
}

/// `Σ_k |s_k − s0_k| + Σ_k |w_k − w0_k|` over `[n, 1]` score and weight outputs.
pub fn evaluator_loss_patchwise<T: Scalar>(g: &mut Graph<T>, s: Var, w: Var, labels: &[PatchLabel]) -> Result<Var> {
    let n = g.value(s).numel();
    if n != labels.len() || g.value(w).numel() != n {
        return Err(RanError::Dimension(format!(
            "{n} predictions vs {} labels",
            labels.len()
        )));
    }
    let dims = g.value(s).dims().to_vec();
    let s0 = g.input(Tensor::new(dims.clone(), labels.iter().map(|l| T::from_f64_lossy(l.s0)).collect())?);
    let w0 = g.input(Tensor::new(dims, labels.iter().map(|l| T::from_f64_lossy(l.w0)).collect())?);
    let ds = g.sub(s, s0)?;
    let ds = g.abs(ds)?;
    let ds = g.sum(ds)?;
    let dw = g.sub(w, w0)?;
    let dw = g.abs(dw)?;
    let dw = g.sum(dw)?;
    Ok(g.add(ds, dw)?)
}

/// `|Σ s_k w_k / Σ w_k − target|` for the patches of one image.
pub fn evaluator_loss_imagewise<T: Scalar>(g: &mut Graph<T>, s: Var, w: Var, target: f64) -> Result<Var> {
    if g.value(s).numel() == 0 {
        return Err(RanError::Argument("image-wise loss needs at least one patch".into()));
    }
    let q = aggregate_var(g, s, w, Aggregate::Weighted)?;
    let d = g.add_scalar(q, T::from_f64_lossy(-target))?;
    Ok(g.abs(d)?)
}

/// Image score from `[n, 1]` patch outputs inside the graph.
pub fn aggregate_var<T: Scalar>(g: &mut Graph<T>, s: Var, w: Var, mode: Aggregate) -> Result<Var> {
    Ok(match mode {
        Aggregate::Weighted => {
            let sw = g.mul(s, w)?;
            let num = g.sum(sw)?;
            let den = g.sum(w)?;
            g.div(num, den)?
        }
        Aggregate::Mean => g.mean(s)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(g: &mut Graph<f64>, v: &[f64]) -> Var {
        g.input(Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap())
    }

    #[test]
    fn patchwise_examples() {
        let mut g = Graph::new();
        let (s, w) = (col(&mut g, &[0.5]), col(&mut g, &[0.2]));
        let l = evaluator_loss_patchwise(&mut g, s, w, &[PatchLabel { s0: 0.8, w0: 0.2 }]).unwrap();
        assert!((g.value(l).item().unwrap() - 0.3).abs() < 1e-12);

        let sv = [0.1, 0.7, 0.35, 0.9];
        let wv = [0.5, 1.5, 0.05, 2.0];
        let labels: Vec<PatchLabel> = [(0.3, 0.4), (0.7, 1.0), (0.2, 0.3), (1.0, 1.9)]
            .iter()
            .map(|&(s0, w0)| PatchLabel { s0, w0 })
            .collect();
        let (s, w) = (col(&mut g, &sv), col(&mut g, &wv));
        let l = evaluator_loss_patchwise(&mut g, s, w, &labels).unwrap();
        let want: f64 = sv.iter().zip(&labels).map(|(a, l)| (a - l.s0).abs()).sum::<f64>()
            + wv.iter().zip(&labels).map(|(a, l)| (a - l.w0).abs()).sum::<f64>();
        assert!((g.value(l).item().unwrap() - want).abs() < 1e-9);
        let l = evaluator_loss_patchwise(&mut g, s, w, &labels[..2]);
        assert!(l.is_err());
    }

    #[test]
    fn imagewise_examples() {
        let mut g = Graph::new();
        let (s, w) = (col(&mut g, &[0.2, 0.8]), col(&mut g, &[1.0, 3.0]));
        let l = evaluator_loss_imagewise(&mut g, s, w, 0.5).unwrap();
        assert!((g.value(l).item().unwrap() - 0.15).abs() < 1e-12);
        let (s, w) = (col(&mut g, &[0.4]), col(&mut g, &[17.0]));
        let l = evaluator_loss_imagewise(&mut g, s, w, 0.9).unwrap();
        assert!((g.value(l).item().unwrap() - 0.5).abs() < 1e-12);
        let (s, w) = (col(&mut g, &[0.6, 0.6, 0.6]), col(&mut g, &[1.0, 2.0, 0.1]));
        let l = evaluator_loss_imagewise(&mut g, s, w, 0.6).unwrap();
        assert!(g.value(l).item().unwrap().abs() < 1e-12);
    }

    #[test]
    fn wgan_constant_critic() {
        let mut g = Graph::new();
        let (r, f) = (col(&mut g, &[0.7, 0.7]), col(&mut g, &[0.7, 0.7]));
        let (c, a) = adversarial_losses(&mut g, r, f, AdvMode::Wgan).unwrap();
        assert_eq!(g.value(c).item().unwrap(), 0.0);
        assert!((g.value(a).item().unwrap() + 0.7).abs() < 1e-15);
        let (c, a) = adversarial_losses(&mut g, r, f, AdvMode::None).unwrap();
        assert_eq!((g.value(c).item().unwrap(), g.value(a).item().unwrap()), (0.0, 0.0));
    }

    #[test]
    fn loggan_matches_cross_entropy() {
        let mut g = Graph::new();
        let (r, f) = (col(&mut g, &[1.5]), col(&mut g, &[-0.5]));
        let (c, a) = adversarial_losses(&mut g, r, f, AdvMode::Loggan).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want_c = -sig(1.5).ln() - (1.0 - sig(-0.5)).ln();
        assert!((g.value(c).item().unwrap() - want_c).abs() < 1e-12);
        assert!((g.value(a).item().unwrap() + sig(-0.5).ln()).abs() < 1e-12);
    }
}
