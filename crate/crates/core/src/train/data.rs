//! In-memory datasets, reference-level splits and patch sampling.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SplitSpec;
use crate::distortion::DistortionFamily;
use crate::error::{RanError, Result};
use crate::image::ImagePlane;
use crate::io::synth::{pristine_name, SyntheticCorpus};
use crate::io::{load_image, read_manifest};
use crate::patches::extract_patches;

#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub id: String,
    /// Key of the pristine source; records sharing it always share a split.
    pub reference: String,
    pub family: Option<DistortionFamily>,
    pub level: Option<u8>,
    pub distorted: ImagePlane,
    pub pristine: ImagePlane,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<ImageRecord>,
}

impl Dataset {
    pub fn from_synthetic(corpus: &SyntheticCorpus) -> Self {
        let records = corpus
            .distorted
            .iter()
            .map(|d| ImageRecord {
                id: SyntheticCorpus::distorted_relpath(d).to_string_lossy().into_owned(),
                reference: pristine_name(d.source),
                family: Some(d.spec.family),
                level: Some(d.spec.level),
                distorted: d.image.clone(),
                pristine: corpus.pristine[d.source].clone(),
                score: Some(d.score),
            })
            .collect();
        Self { records }
    }

    /// Load every image a manifest names; relative paths resolve against its directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cache: BTreeMap<String, ImagePlane> = BTreeMap::new();
        let mut records = Vec::new();
        for row in read_manifest(path)? {
            let (dp, rp) = row.resolve(base);
            let key = row.reference_path.to_string_lossy().into_owned();
            if !cache.contains_key(&key) {
                cache.insert(key.clone(), load_image(&rp)?);
            }
            let pristine = cache[&key].clone();
            let distorted = load_image(&dp)?;
            if !distorted.same_dims(&pristine) {
                return Err(RanError::Dimension(format!(
                    "{} and its reference differ in size",
                    dp.display()
                )));
            }
            records.push(ImageRecord {
                id: row.distorted_path.to_string_lossy().into_owned(),
                reference: key,
                family: row.family,
                level: row.level,
                distorted,
                pristine,
                score: row.score,
            });
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn score(&self, i: usize) -> Result<f64> {
        self.records[i]
            .score
            .ok_or_else(|| RanError::Argument(format!("record {} has no image score", self.records[i].id)))
    }
}

/// Record indices per split. Reads of the test indices are counted so a
/// protocol can prove it never looked at them before final evaluation.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    test: Vec<usize>,
    test_reads: Cell<usize>,
}

impl Split {
    pub fn test(&self) -> &[usize] {
        self.test_reads.set(self.test_reads.get() + 1);
        &self.test
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.get()
    }

    /// Membership as (train, val, test) without counting a test read.
    pub fn membership(&self) -> (&[usize], &[usize], &[usize]) {
        (&self.train, &self.val, &self.test)
    }
}

/// Shuffle the distinct references and cut them by the split fractions.
pub fn split_by_reference(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut refs: Vec<&str> = ds.records.iter().map(|r| r.reference.as_str()).collect();
    refs.sort_unstable();
    refs.dedup();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n = refs.len();
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
    let part: BTreeMap<&str, u8> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| (*r, if i < n_train { 0 } else if i < n_train + n_val { 1 } else { 2 }))
        .collect();
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        test_reads: Cell::new(0),
    };
    for (i, r) in ds.records.iter().enumerate() {
        match part[r.reference.as_str()] {
            0 => split.train.push(i),
            1 => split.val.push(i),
            _ => split.test.push(i),
        }
    }
    Ok(split)
}

/// Aligned distorted/pristine patches from the same grid cell.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub record: usize,
    pub distorted: ImagePlane,
    pub pristine: ImagePlane,
}

pub fn patch_pairs(ds: &Dataset, indices: &[usize], patch: usize) -> Result<Vec<PatchPair>> {
    let mut out = Vec::new();
    for &i in indices {
        let r = &ds.records[i];
        let (d, _) = extract_patches(&r.distorted, patch)?;
        let (p, _) = extract_patches(&r.pristine, patch)?;
        out.extend(d.into_iter().zip(p).map(|(distorted, pristine)| PatchPair {
            record: i,
            distorted,
            pristine,
        }));
    }
    Ok(out)
}

/// Minibatch indices: a random subset without replacement, or everything in
/// order when the batch covers the whole set.
pub fn sample_batch(rng: &mut impl Rng, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, batch).into_vec()
    }
}
