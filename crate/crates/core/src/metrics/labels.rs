use crate::error::{RanError, Result};
use crate::image::ImagePlane;
use crate::metrics::fsim::fsim;

/// FSIM-derived supervision for one distorted patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchLabel {
    pub s0: f64,
    pub w0: f64,
}

/// `s0` is the FSIM score of the pair, `w0` its phase-congruency mass per pixel.
pub fn patch_pseudo_labels(distorted: &ImagePlane, pristine: &ImagePlane) -> Result<PatchLabel> {
    let f = fsim(distorted, pristine)?;
    let w0 = f.pc_mass / (distorted.width() * distorted.height()) as f64;
    if !(f.score > 0.0) {
        return Err(RanError::UndefinedStatistic(format!("non-positive FSIM {}", f.score)));
    }
    Ok(PatchLabel { s0: f.score, w0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{DistortionFamily, DistortionSpec};

    fn texture() -> ImagePlane {
        ImagePlane::from_fn(64, 64, |c, x, y| {
            let (x, y) = (x as f32, y as f32);
            0.5 + 0.3 * (0.4 * x + 0.1 * c as f32).sin() * (0.25 * y).cos() + if x > y { 0.1 } else { -0.1 }
        })
        .unwrap()
    }

    #[test]
    fn self_pair_scores_one() {
        let p = texture();
        let l = patch_pseudo_labels(&p, &p).unwrap();
        assert_eq!(l.s0, 1.0);
        assert!(l.w0 > 0.0);
    }

    #[test]
    fn black_pair_is_degenerate() {
        let p = ImagePlane::filled(64, 64, [0.0; 3]).unwrap();
        assert_eq!(patch_pseudo_labels(&p, &p).unwrap(), PatchLabel { s0: 1.0, w0: 0.0 });
    }

    #[test]
    fn heavier_noise_scores_lower() {
        let p = texture();
        let s = |level| {
            let d = DistortionSpec::new(DistortionFamily::WhiteNoise, level, 3).unwrap().apply(&p).unwrap();
            patch_pseudo_labels(&d, &p).unwrap().s0
        };
        assert!(s(5) < s(1));
    }
}
