//! Procedural pristine images and the distorted corpus built from them.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distortion::{DistortionFamily, DistortionSpec, LEVELS};
use crate::error::{RanError, Result};
use crate::image::ImagePlane;
use crate::io::manifest::{write_manifest, ManifestRow};
use crate::io::ppm::save_image;
use crate::metrics::fsim;

const MIN_STD: f64 = 0.02;

/// Smooth random field by diamond-square mid-point displacement, values roughly in [-1, 1].
fn midpoint_field(size: usize, roughness: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = size.next_power_of_two() + 1;
    let mut g = vec![0.0; n * n];
    for &(x, y) in &[(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
        g[y * n + x] = rng.random_range(-1.0..1.0);
    }
    let mut step = n - 1;
    let mut amp = 1.0;
    while step > 1 {
        let half = step / 2;
        for y in (half..n).step_by(step) {
            for x in (half..n).step_by(step) {
                let avg = (g[(y - half) * n + x - half]
                    + g[(y - half) * n + x + half]
                    + g[(y + half) * n + x - half]
                    + g[(y + half) * n + x + half])
                    / 4.0;
                g[y * n + x] = avg + amp * rng.random_range(-1.0..1.0);
            }
        }
        for y in (0..n).step_by(half) {
            let x0 = if (y / half).is_multiple_of(2) { half } else { 0 };
            for x in (x0..n).step_by(step) {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                if y >= half {
                    acc += g[(y - half) * n + x];
                    cnt += 1.0;
                }
                if y + half < n {
                    acc += g[(y + half) * n + x];
                    cnt += 1.0;
                }
                if x >= half {
                    acc += g[y * n + x - half];
                    cnt += 1.0;
                }
                if x + half < n {
                    acc += g[y * n + x + half];
                    cnt += 1.0;
                }
                g[y * n + x] = acc / cnt + amp * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
        amp *= roughness;
    }
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        out.extend_from_slice(&g[y * n..y * n + size]);
    }
    out
}

fn sinusoid(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let theta = rng.random_range(0.0..PI);
    let period = rng.random_range(4.0..(size as f64 / 2.0));
    let phase = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            (2.0 * PI * (x * c + y * s) / period + phase).sin()
        })
        .collect()
}

fn shapes(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![rng.random_range(-1.0..1.0); size * size];
    let count = rng.random_range(3..9);
    let sz = size as f64;
    for _ in 0..count {
        let value = rng.random_range(-1.0..1.0);
        let (cx, cy) = (rng.random_range(0.0..sz), rng.random_range(0.0..sz));
        let (rx, ry) = (rng.random_range(sz / 12.0..sz / 3.0), rng.random_range(sz / 12.0..sz / 3.0));
        let disc = rng.random_bool(0.5);
        for (i, v) in out.iter_mut().enumerate() {
            let (dx, dy) = (((i % size) as f64 - cx) / rx, ((i / size) as f64 - cy) / ry);
            let inside = if disc { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
            if inside {
                *v = value;
            }
        }
    }
    out
}

fn gradient(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let theta = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    let half = size as f64 / 2.0;
    (0..size * size)
        .map(|i| (((i % size) as f64 - half) * c + ((i / size) as f64 - half) * s) / half)
        .collect()
}

fn component(kind: usize, size: usize, rng: &mut impl Rng) -> Vec<f64> {
    match kind {
        0 => {
            let roughness = rng.random_range(0.45..0.7);
            midpoint_field(size, roughness, rng)
        }
        1 => sinusoid(size, rng),
        2 => shapes(size, rng),
        _ => gradient(size, rng),
    }
}

/// One colour pristine image of `size`×`size`.
///
/// Each image mixes two to four procedural layers. Every layer gets a random
/// colour direction so channels are correlated but not identical.
pub fn pristine_image(size: usize, rng: &mut impl Rng) -> Result<ImagePlane> {
    let layers = rng.random_range(2..=4);
    let mut rgb = vec![0.0f64; 3 * size * size];
    for _ in 0..layers {
        let kind = rng.random_range(0..4);
        let layer = component(kind, size, rng);
        let weight = rng.random_range(0.3..1.0);
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.4..1.0));
        for (c, t) in tint.iter().enumerate() {
            for (dst, v) in rgb[c * size * size..(c + 1) * size * size].iter_mut().zip(&layer) {
                *dst += weight * t * v;
            }
        }
    }
    let (lo, hi) = rgb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-9);
    let contrast = rng.random_range(0.6..0.95);
    let offset = rng.random_range(0.0..(1.0 - contrast));
    let data = rgb.iter().map(|v| (offset + contrast * (v - lo) / span) as f32).collect();
    ImagePlane::from_unclamped(size, size, data)
}

#[derive(Debug, Clone)]
pub struct DistortedItem {
    pub source: usize,
    pub spec: DistortionSpec,
    pub image: ImagePlane,
    /// Full-image FSIM against the pristine source.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pristine: Vec<ImagePlane>,
    pub distorted: Vec<DistortedItem>,
}

fn quantize(img: &ImagePlane) -> Result<ImagePlane> {
    ImagePlane::from_rgb8(img.width(), img.height(), &img.to_rgb8())
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed ^ 0x5eed_c0de, |acc, &p| {
        (acc ^ p).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29)
    })
}

pub fn pristine_name(i: usize) -> String {
    format!("img_{i:04}.ppm")
}

/// `n` pristine images and all 4×5 distorted variants of each. Images are
/// 8-bit quantized so the in-memory corpus equals what [`SyntheticCorpus::write`] emits.
pub fn gen_synthetic_corpus(n: usize, size: usize, seed: u64) -> Result<SyntheticCorpus> {
    if n == 0 {
        return Err(RanError::Argument("corpus needs at least one image".into()));
    }
    if size < 64 {
        return Err(RanError::Argument(format!("corpus image size {size} below 64")));
    }
    let mut pristine = Vec::with_capacity(n);
    let mut distorted = Vec::with_capacity(20 * n);
    for i in 0..n {
        let mut attempt = 0u64;
        let img = loop {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64, attempt]));
            let img = quantize(&pristine_image(size, &mut rng)?)?;
            if img.std_dev() > MIN_STD {
                break img;
            }
            attempt += 1;
        };
        for family in DistortionFamily::ALL {
            for level in LEVELS {
                let s = derive_seed(seed, &[i as u64, family.index() as u64, level as u64, 0xd15]);
                let spec = DistortionSpec::new(family, level, s)?;
                let image = quantize(&spec.apply(&img)?)?;
                let score = fsim(&image, &img)?.score;
                distorted.push(DistortedItem {
                    source: i,
                    spec,
                    image,
                    score,
                });
            }
        }
        pristine.push(img);
    }
    Ok(SyntheticCorpus { pristine, distorted })
}

impl SyntheticCorpus {
    pub fn distorted_relpath(item: &DistortedItem) -> PathBuf {
        Path::new("distorted")
            .join(item.spec.family.as_str())
            .join(item.spec.level.to_string())
            .join(pristine_name(item.source))
    }

    pub fn manifest_rows(&self) -> Vec<ManifestRow> {
        self.distorted
            .iter()
            .map(|d| ManifestRow {
                distorted_path: Self::distorted_relpath(d),
                reference_path: Path::new("pristine").join(pristine_name(d.source)),
                family: Some(d.spec.family),
                level: Some(d.spec.level),
                score: Some(d.score),
                split: None,
            })
            .collect()
    }

    /// Writes `pristine/`, `distorted/<family>/<level>/` and `manifest.csv` under `root`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
        let root = root.as_ref();
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| RanError::io(p, e));
        mkdir(&root.join("pristine"))?;
        for (i, img) in self.pristine.iter().enumerate() {
            save_image(img, root.join("pristine").join(pristine_name(i)))?;
        }
        for d in &self.distorted {
            let path = root.join(Self::distorted_relpath(d));
            if let Some(parent) = path.parent() {
                mkdir(parent)?;
            }
            save_image(&d.image, path)?;
        }
        let rows = self.manifest_rows();
        write_manifest(&rows, root.join("manifest.csv"))?;
        Ok(rows)
    }
}
