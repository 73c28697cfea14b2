//! Gain of restoration: distance between distorted images and their restorations.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::phases::restore_all;
use crate::distortion::{DistortionFamily, DistortionSpec};
use crate::error::{RanError, Result};
use crate::image::ImagePlane;
use crate::io::synth::derive_seed;
use crate::metrics::{psnr, ssim};
use crate::nets::RanModel;
use crate::patches::{extract_patches, reassemble, PatchGrid};

pub const GOR_LEVELS: [u8; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GorRow {
    pub family: DistortionFamily,
    pub level: u8,
    /// PSNR(distorted, restored) per image; `inf` for an exact pass-through.
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GorVerdict {
    pub family: DistortionFamily,
    /// Mean similarity strictly decreases as the level rises.
    pub psnr: bool,
    pub ssim: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GorReport {
    pub rows: Vec<GorRow>,
    pub verdicts: Vec<GorVerdict>,
    /// False when the restorator never went through phase 1.
    pub restorator_trained: bool,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn strictly_decreasing(means: &[f64]) -> bool {
    means.windows(2).all(|w| w[1] < w[0])
}

impl GorReport {
    pub fn families_passing(&self, metric: &str) -> usize {
        self.verdicts
            .iter()
            .filter(|v| if metric == "psnr" { v.psnr } else { v.ssim })
            .count()
    }

    /// Long format: `family,level,metric,mean,std,n`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        writeln!(buf, "family,level,metric,mean,std,n").expect("write to memory");
        for r in &self.rows {
            for (metric, vals) in [("psnr", &r.psnr), ("ssim", &r.ssim)] {
                let (m, s) = mean_std(vals);
                writeln!(buf, "{},{},{metric},{m:?},{s:?},{}", r.family, r.level, vals.len()).expect("write to memory");
            }
        }
        std::fs::write(path, buf).map_err(|e| RanError::io(path, e))
    }
}

/// Restore a whole image patch by patch; returns the covered crop of the
/// input and its restoration.
pub fn restore_image(model: &RanModel, img: &ImagePlane) -> Result<(ImagePlane, ImagePlane)> {
    let (patches, grid) = extract_patches(img, model.cfg.patch_size)?;
    let refs: Vec<&ImagePlane> = patches.iter().collect();
    let restored = reassemble(&restore_all(model, &refs)?, grid)?;
    Ok((covered(img, grid)?, restored))
}

fn covered(img: &ImagePlane, grid: PatchGrid) -> Result<ImagePlane> {
    img.crop(0, 0, grid.cols * grid.patch, grid.rows * grid.patch)
}

/// Distort every pristine image at every family and level, restore it and
/// measure PSNR and SSIM between the distorted and restored versions.
pub fn gor_experiment(model: &RanModel, pristine: &[ImagePlane], levels: &[u8], seed: u64) -> Result<GorReport> {
    if pristine.is_empty() || levels.is_empty() {
        return Err(RanError::Argument("GoR needs images and levels".into()));
    }
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for family in DistortionFamily::ALL {
        let mut means = (Vec::new(), Vec::new());
        for &level in levels {
            let mut row = GorRow {
                family,
                level,
                psnr: Vec::with_capacity(pristine.len()),
                ssim: Vec::with_capacity(pristine.len()),
            };
            for (i, img) in pristine.iter().enumerate() {
                let s = derive_seed(seed, &[i as u64, family.index() as u64, level as u64]);
                let distorted = DistortionSpec::new(family, level, s)?.apply(img)?;
                let (d, r) = restore_image(model, &distorted)?;
                row.psnr.push(psnr(&d, &r)?);
                row.ssim.push(ssim(&d, &r)?);
            }
            means.0.push(mean_std(&row.psnr).0);
            means.1.push(mean_std(&row.ssim).0);
            rows.push(row);
        }
        verdicts.push(GorVerdict {
            family,
            psnr: strictly_decreasing(&means.0),
            ssim: strictly_decreasing(&means.1),
        });
    }
    Ok(GorReport {
        rows,
        verdicts,
        restorator_trained: model.phases_done.contains(&1),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::io::synth::pristine_image;
    use crate::nets::NetworkConfig;

    #[test]
    fn identity_restorator_gives_infinite_psnr_and_no_verdict() {
        let mut model = RanModel::new(NetworkConfig::desk(), 0).unwrap();
        model.restorator.set_identity(&mut model.r_params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imgs: Vec<ImagePlane> = (0..2).map(|_| pristine_image(40, &mut rng).unwrap()).collect();
        let rep = gor_experiment(&model, &imgs, &GOR_LEVELS, 3).unwrap();
        assert_eq!(rep.rows.len(), 12);
        assert!(rep.rows.iter().all(|r| r.psnr.iter().all(|p| p.is_infinite())));
        assert!(rep.rows.iter().all(|r| r.ssim.iter().all(|&s| s == 1.0)));
        assert_eq!(rep.families_passing("psnr") + rep.families_passing("ssim"), 0);
        assert!(!rep.restorator_trained);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gor.csv");
        rep.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap().lines().count(), 25);
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
        assert!(!strictly_decreasing(&[f64::INFINITY, f64::INFINITY]));
    }
}
