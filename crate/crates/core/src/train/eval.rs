//! Benchmark evaluation on the test split and repeated-split significance.

use serde::Serialize;

use super::data::{Dataset, Split};
use crate::error::{RanError, Result};
use crate::nets::{score_image, RanModel};
use crate::stats::{plcc, srocc, ttest_two_sided, TTest};

/// Source of the image-level predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    Model,
    /// Predictions copied from the targets; checks the harness itself.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub srocc: f64,
    /// After the 5-parameter logistic mapping.
    pub plcc: f64,
    pub n: usize,
    pub ids: Vec<String>,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn benchmark_report(ids: Vec<String>, predictions: Vec<f64>, targets: Vec<f64>) -> Result<BenchmarkReport> {
    Ok(BenchmarkReport {
        srocc: srocc(&predictions, &targets)?,
        plcc: plcc(&predictions, &targets, true)?,
        n: predictions.len(),
        ids,
        predictions,
        targets,
    })
}

/// Score every test image and correlate with its target score.
pub fn eval_benchmark(model: &RanModel, ds: &Dataset, split: &Split, predictor: Predictor) -> Result<BenchmarkReport> {
    let test = split.test();
    if test.is_empty() {
        return Err(RanError::Argument("test split is empty".into()));
    }
    let targets = test.iter().map(|&i| ds.score(i)).collect::<Result<Vec<f64>>>()?;
    let ids: Vec<String> = test.iter().map(|&i| ds.records[i].id.clone()).collect();
    let predictions = match predictor {
        Predictor::Oracle => targets.clone(),
        Predictor::Model => test
            .iter()
            .map(|&i| {
                let r = &ds.records[i];
                score_image(
                    &model.restorator,
                    &model.r_params,
                    &model.evaluator,
                    &model.e_params,
                    &r.distorted,
                    model.cfg.patch_size,
                    model.cfg.aggregate,
                    r.id.clone(),
                )
                .map(|q| q.q)
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    benchmark_report(ids, predictions, targets)
}

/// Two-sided tests on per-split SROCC and PLCC of two models. Runs on
/// different splits are treated as independent samples (Welch).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub k: usize,
    pub srocc: TTest,
    pub plcc: TTest,
}

pub fn repeated_splits_ttest(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<SignificanceReport> {
    if a.len() != b.len() {
        return Err(RanError::Argument(format!(
            "both models need the same number of splits, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let col = |v: &[(f64, f64)], j: usize| -> Vec<f64> { v.iter().map(|p| if j == 0 { p.0 } else { p.1 }).collect() };
    Ok(SignificanceReport {
        k: a.len(),
        srocc: ttest_two_sided(&col(a, 0), &col(b, 0))?,
        plcc: ttest_two_sided(&col(a, 1), &col(b, 1))?,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::io::gen_synthetic_corpus;
    use crate::nets::NetworkConfig;
    use crate::train::data::split_by_reference;
    use crate::train::SplitSpec;

    #[test]
    fn oracle_injection_is_perfect() {
        let ds = Dataset::from_synthetic(&gen_synthetic_corpus(5, 64, 3).unwrap());
        let split = split_by_reference(&ds, &SplitSpec::default()).unwrap();
        let model = RanModel::new(NetworkConfig::desk(), 0).unwrap();
        let rep = eval_benchmark(&model, &ds, &split, Predictor::Oracle).unwrap();
        assert_eq!(rep.n, split.test_len());
        assert!((rep.srocc - 1.0).abs() < 1e-12);
        assert!((rep.plcc - 1.0).abs() < 1e-9);
        assert_eq!(split.test_reads(), 1);
    }

    #[test]
    fn noise_predictions_do_not_correlate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let targets: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let preds: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let rep = benchmark_report(vec![String::new(); 200], preds, targets).unwrap();
        assert!(rep.srocc.abs() < 0.2, "{}", rep.srocc);
    }

    #[test]
    fn ttest_over_splits() {
        let a: Vec<(f64, f64)> = (0..15).map(|i| (0.9 + 0.001 * i as f64, 0.91 - 0.0005 * i as f64)).collect();
        let same = repeated_splits_ttest(&a, &a).unwrap();
        assert_eq!((same.srocc.p, same.plcc.p), (1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut jit = || 0.002 * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt();
        let b: Vec<(f64, f64)> = (0..15).map(|_| (0.85 + jit(), 0.86 + jit())).collect();
        let a: Vec<(f64, f64)> = b.iter().map(|&(s, p)| (s + 0.05 + jit(), p + 0.05 + jit())).collect();
        let rep = repeated_splits_ttest(&a, &b).unwrap();
        assert!(rep.srocc.p < 0.01 && rep.plcc.p < 0.01);
        assert!(repeated_splits_ttest(&a[..3], &b).is_err());
    }
}
