//! Corpus manifests: one CSV row per distorted image.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionFamily, LEVELS};
use crate::error::{RanError, Result};

pub const COLUMNS: [&str; 6] = ["distorted_path", "reference_path", "family", "level", "score", "split"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Relative paths are resolved against the manifest's directory.
    pub distorted_path: PathBuf,
    pub reference_path: PathBuf,
    pub family: Option<DistortionFamily>,
    pub level: Option<u8>,
    pub score: Option<f64>,
    pub split: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawRow {
    distorted_path: String,
    reference_path: String,
    family: Option<String>,
    level: Option<u8>,
    score: Option<f64>,
    split: Option<String>,
}

impl ManifestRow {
    fn from_raw(raw: RawRow, line: u64) -> Result<Self> {
        let bad = |what: String| RanError::Format(format!("manifest line {line}: {what}"));
        let family = match raw.family.as_deref() {
            None | Some("") => None,
            Some(s) => Some(s.parse::<DistortionFamily>().map_err(|e| bad(e.to_string()))?),
        };
        if let Some(l) = raw.level {
            if !LEVELS.contains(&l) {
                return Err(bad(format!("level {l} outside 1..=5")));
            }
        }
        if family.is_some() && raw.level.is_none() {
            return Err(bad("family given without level".into()));
        }
        if raw.score.is_some_and(|s| !s.is_finite()) {
            return Err(bad("non-finite score".into()));
        }
        if raw.distorted_path.is_empty() || raw.reference_path.is_empty() {
            return Err(bad("empty path".into()));
        }
        Ok(Self {
            distorted_path: raw.distorted_path.into(),
            reference_path: raw.reference_path.into(),
            family,
            level: raw.level,
            score: raw.score,
            split: raw.split.filter(|s| !s.is_empty()),
        })
    }

    pub fn resolve(&self, base: &Path) -> (PathBuf, PathBuf) {
        (base.join(&self.distorted_path), base.join(&self.reference_path))
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| RanError::io(path, e))?;
    parse_manifest(file)
}

pub fn parse_manifest(reader: impl std::io::Read) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in &COLUMNS[..4] {
        if !headers.iter().any(|h| h == *col) {
            return Err(RanError::Format(format!("manifest is missing column {col:?}")));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw: RawRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| RanError::Format(format!("manifest line {line}: {e}")))?;
        rows.push(ManifestRow::from_raw(raw, line)?);
    }
    Ok(rows)
}

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| RanError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.distorted_path.to_string_lossy().into_owned(),
            r.reference_path.to_string_lossy().into_owned(),
            r.family.map(|f| f.to_string()).unwrap_or_default(),
            r.level.map(|l| l.to_string()).unwrap_or_default(),
            // `{:?}` prints the shortest string that parses back to the same f64.
            r.score.map(|s| format!("{s:?}")).unwrap_or_default(),
            r.split.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| RanError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, score: Option<f64>) -> ManifestRow {
        ManifestRow {
            distorted_path: format!("distorted/jpeg/3/img_{i:04}.ppm").into(),
            reference_path: format!("pristine/img_{i:04}.ppm").into(),
            family: Some(DistortionFamily::JpegLike),
            level: Some(3),
            score,
            split: i.is_multiple_of(2).then(|| "train".to_string()),
        }
    }

    #[test]
    fn empty_manifest_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), COLUMNS.join(",") + "\n");
        assert!(read_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![row(0, Some(0.912_345_678_912_3)), row(1, None), row(2, Some(1.0 / 3.0))];
        write_manifest(&rows, &p).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
    }

    #[test]
    fn missing_score_is_unscored() {
        let text = "distorted_path,reference_path,family,level,score,split\na.ppm,b.ppm,wn,2,,\n";
        let rows = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(rows[0].score, None);
        assert_eq!(rows[0].family, Some(DistortionFamily::WhiteNoise));
    }

    #[test]
    fn rejects_malformed() {
        let missing = "distorted_path,reference_path,family\na,b,wn\n";
        assert!(parse_manifest(missing.as_bytes()).is_err());
        let bad_level = "distorted_path,reference_path,family,level,score,split\na,b,wn,9,,\n";
        assert!(parse_manifest(bad_level.as_bytes()).is_err());
        let bad_score = "distorted_path,reference_path,family,level,score,split\na,b,wn,2,abc,\n";
        assert!(parse_manifest(bad_score.as_bytes()).is_err());
    }
}
