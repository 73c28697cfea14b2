//! The four synthetic distortion families at five severity levels.

mod blur;
mod jp2k;
mod jpeg;
mod noise;

use std::fmt;
use std::str::FromStr;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use jp2k::jp2k_like;
pub use jpeg::{jpeg_like, quant_table};
pub use noise::white_noise;

use crate::error::{RanError, Result};
use crate::image::ImagePlane;

pub const LEVELS: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistortionFamily {
    GaussianBlur,
    WhiteNoise,
    JpegLike,
    Jp2kLike,
}

impl DistortionFamily {
    pub const ALL: [DistortionFamily; 4] = [
        DistortionFamily::GaussianBlur,
        DistortionFamily::WhiteNoise,
        DistortionFamily::JpegLike,
        DistortionFamily::Jp2kLike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistortionFamily::GaussianBlur => "gblur",
            DistortionFamily::WhiteNoise => "wn",
            DistortionFamily::JpegLike => "jpeg",
            DistortionFamily::Jp2kLike => "jp2k",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DistortionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl serde::Serialize for DistortionFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for DistortionFamily {
    type Err = RanError;

    fn from_str(s: &str) -> Result<Self> {
        DistortionFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| RanError::Argument(format!("unknown distortion family {s:?}")))
    }
}

/// Level-indexed parameters for each family (index 0 = level 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityTable {
    pub blur_sigma: [f64; 5],
    pub noise_sigma: [f64; 5],
    pub jpeg_quality: [u8; 5],
    pub jp2k_keep: [f64; 5],
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self {
            blur_sigma: [0.9, 1.7, 3.0, 5.0, 8.0],
            noise_sigma: [0.02, 0.045, 0.09, 0.18, 0.35],
            jpeg_quality: [85, 60, 35, 18, 8],
            jp2k_keep: [0.2, 0.1, 0.05, 0.025, 0.012],
        }
    }
}

/// Generative description of one degraded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DistortionSpec {
    pub family: DistortionFamily,
    pub level: u8,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(family: DistortionFamily, level: u8, seed: u64) -> Result<Self> {
        if !LEVELS.contains(&level) {
            return Err(RanError::Argument(format!("distortion level {level} outside 1..=5")));
        }
        Ok(Self { family, level, seed })
    }

    pub fn apply(&self, img: &ImagePlane) -> Result<ImagePlane> {
        self.apply_with(&SeverityTable::default(), img)
    }

    pub fn apply_with(&self, table: &SeverityTable, img: &ImagePlane) -> Result<ImagePlane> {
        if !LEVELS.contains(&self.level) {
            return Err(RanError::Argument(format!("distortion level {} outside 1..=5", self.level)));
        }
        let i = (self.level - 1) as usize;
        match self.family {
            DistortionFamily::GaussianBlur => Ok(gaussian_blur(img, table.blur_sigma[i])),
            DistortionFamily::WhiteNoise => Ok(white_noise(img, table.noise_sigma[i], self.seed)),
            DistortionFamily::JpegLike => jpeg_like(img, table.jpeg_quality[i]),
            DistortionFamily::Jp2kLike => jp2k_like(img, table.jp2k_keep[i]),
        }
    }
}
