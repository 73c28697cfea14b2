//! Rank and linear correlation, logistic regression, and Welch's t-test.

mod logistic;
mod ttest;

pub use logistic::{logistic, logistic_fit, LogisticFit};
pub use ttest::{ttest_two_sided, TTest};

use crate::error::{RanError, Result};

fn check_pairs(pred: &[f64], target: &[f64], min_n: usize) -> Result<()> {
    if pred.len() != target.len() {
        return Err(RanError::Dimension(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < min_n {
        return Err(RanError::Argument(format!("need at least {min_n} pairs, got {}", pred.len())));
    }
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(RanError::Argument("non-finite score".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; errors if either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RanError::UndefinedStatistic("correlation of a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receive the average of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn srocc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pairs(pred, target, 3)?;
    pearson(&average_ranks(pred), &average_ranks(target))
}

/// Pearson correlation, optionally after mapping predictions through a fitted logistic.
pub fn plcc(pred: &[f64], target: &[f64], fitted: bool) -> Result<f64> {
    check_pairs(pred, target, 3)?;
    if !fitted {
        return pearson(pred, target);
    }
    let fit = logistic_fit(pred, target)?;
    let mapped: Vec<f64> = pred.iter().map(|&x| logistic(&fit.beta, x)).collect();
    pearson(&mapped, target)
}
