use ran_tensor::{Graph, Mode, ParamStore};
use serde::Serialize;

use super::config::Aggregate;
use super::critic::Evaluator;
use super::restorator::Restorator;
use super::{EVALUATOR, RESTORATOR};
use crate::error::{RanError, Result};
use crate::image::{batch_tensor, ImagePlane};
use crate::patches::{extract_patches, PatchGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchScore {
    pub s: f64,
    pub w: f64,
}

/// Pool patch scores into one image score.
pub fn aggregate(scores: &[PatchScore], mode: Aggregate) -> Result<f64> {
    if scores.is_empty() {
        return Err(RanError::Argument("cannot aggregate zero patches".into()));
    }
    Ok(match mode {
        Aggregate::Weighted => {
            let den: f64 = scores.iter().map(|p| p.w).sum();
            if !(den > 0.0) {
                return Err(RanError::Argument("patch weights must be positive".into()));
            }
            scores.iter().map(|p| p.s * p.w).sum::<f64>() / den
        }
        Aggregate::Mean => scores.iter().map(|p| p.s).sum::<f64>() / scores.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub image_id: String,
    pub grid: PatchGrid,
    pub aggregate: Aggregate,
    pub patches: Vec<PatchScore>,
    pub q: f64,
}

impl QualityReport {
    /// Image score recomputed from the listed patches.
    pub fn recompute(&self) -> Result<f64> {
        aggregate(&self.patches, self.aggregate)
    }
}

/// Patch outputs of the evaluator on restored/distorted pairs, in inference mode.
pub fn evaluate_patches(
    evaluator: &Evaluator,
    e_params: &ParamStore,
    distorted: &[&ImagePlane],
    restored: &[&ImagePlane],
) -> Result<Vec<PatchScore>> {
    let mut g = Graph::new();
    g.freeze(EVALUATOR);
    let d = g.input(batch_tensor(distorted)?);
    let r = g.input(batch_tensor(restored)?);
    let out = evaluator.forward(&mut g, e_params, d, r, Mode::Infer)?;
    Ok(g.value(out.s)
        .data()
        .iter()
        .zip(g.value(out.w).data())
        .map(|(&s, &w)| PatchScore {
            s: s as f64,
            w: w as f64,
        })
        .collect())
}

/// Score a distorted image: restore each patch, evaluate every
/// (distorted, restored) pair and pool.
pub fn score_image(
    restorator: &Restorator,
    r_params: &ParamStore,
    evaluator: &Evaluator,
    e_params: &ParamStore,
    img: &ImagePlane,
    patch: usize,
    mode: Aggregate,
    image_id: impl Into<String>,
) -> Result<QualityReport> {
    debug_assert!(r_params.names().all(|n| n.starts_with(RESTORATOR)));
    let (patches, grid) = extract_patches(img, patch)?;
    let refs: Vec<&ImagePlane> = patches.iter().collect();
    let restored = restorator.restore(r_params, &refs)?;
    let rrefs: Vec<&ImagePlane> = restored.iter().collect();
    let scores = evaluate_patches(evaluator, e_params, &refs, &rrefs)?;
    let q = aggregate(&scores, mode)?;
    Ok(QualityReport {
        image_id: image_id.into(),
        grid,
        aggregate: mode,
        patches: scores,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        let p = |s, w| PatchScore { s, w };
        let eq = [p(0.2, 2.0), p(0.5, 2.0), p(0.8, 2.0)];
        assert!((aggregate(&eq, Aggregate::Weighted).unwrap() - 0.5).abs() < 1e-15);
        let uneven = [p(0.2, 1.0), p(0.8, 3.0)];
        assert!((aggregate(&uneven, Aggregate::Weighted).unwrap() - 0.65).abs() < 1e-15);
        assert!((aggregate(&uneven, Aggregate::Mean).unwrap() - 0.5).abs() < 1e-15);
        assert!(aggregate(&[], Aggregate::Mean).is_err());
    }

    proptest! {
        #[test]
        fn weighted_pooling_ignores_weight_scale(
            pairs in prop::collection::vec((-2.0f64..2.0, 1e-3f64..5.0), 1..40)
        ) {
            let ps: Vec<PatchScore> = pairs.iter().map(|&(s, w)| PatchScore { s, w }).collect();
            let scaled: Vec<PatchScore> = ps.iter().map(|p| PatchScore { s: p.s, w: 7.3 * p.w }).collect();
            let a = aggregate(&ps, Aggregate::Weighted).unwrap();
            let b = aggregate(&scaled, Aggregate::Weighted).unwrap();
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
