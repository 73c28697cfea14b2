//! Non-overlapping patch grids.

use serde::Serialize;

use crate::error::{RanError, Result};
use crate::image::{ImagePlane, CHANNELS};

/// Row-major grid of `cols × rows` patches of side `patch`, anchored at the
/// top-left corner. Pixels past the last full patch are not covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatchGrid {
    pub patch: usize,
    pub cols: usize,
    pub rows: usize,
}

impl PatchGrid {
    pub fn for_image(width: usize, height: usize, patch: usize) -> Result<Self> {
        if patch == 0 {
            return Err(RanError::Argument("patch size must be positive".into()));
        }
        if width < patch || height < patch {
            return Err(RanError::Argument(format!(
                "{width}x{height} image is smaller than one {patch}x{patch} patch"
            )));
        }
        Ok(Self {
            patch,
            cols: width / patch,
            rows: height / patch,
        })
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left pixel of patch `k`.
    pub fn origin(&self, k: usize) -> (usize, usize) {
        ((k % self.cols) * self.patch, (k / self.cols) * self.patch)
    }
}

pub fn extract_patches(img: &ImagePlane, patch: usize) -> Result<(Vec<ImagePlane>, PatchGrid)> {
    let grid = PatchGrid::for_image(img.width(), img.height(), patch)?;
    let patches = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.origin(k);
            img.crop(x, y, patch, patch)
        })
        .collect::<Result<_>>()?;
    Ok((patches, grid))
}

/// Inverse of [`extract_patches`] on the covered region.
pub fn reassemble(patches: &[ImagePlane], grid: PatchGrid) -> Result<ImagePlane> {
    if patches.len() != grid.len() {
        return Err(RanError::Dimension(format!(
            "{} patches for a grid of {}",
            patches.len(),
            grid.len()
        )));
    }
    let p = grid.patch;
    let (w, h) = (grid.cols * p, grid.rows * p);
    let mut data = vec![0.0f32; CHANNELS * w * h];
    for (k, patch) in patches.iter().enumerate() {
        if patch.width() != p || patch.height() != p {
            return Err(RanError::Dimension(format!("patch {k} is not {p}x{p}")));
        }
        let (x0, y0) = grid.origin(k);
        for c in 0..CHANNELS {
            let src = patch.plane(c);
            for y in 0..p {
                let dst = (c * h + y0 + y) * w + x0;
                data[dst..dst + p].copy_from_slice(&src[y * p..(y + 1) * p]);
            }
        }
    }
    ImagePlane::new(w, h, data)
}
