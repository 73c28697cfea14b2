use crate::error::{RanError, Result};
use crate::image::ImagePlane;

pub const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const RANGE: f64 = 255.0;

fn window_1d() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut k: [f64; WINDOW] = std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SIGMA * SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable 'valid' filtering of a `w × h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two luma planes (0..255 scale) over valid window positions.
pub fn ssim_luma(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<f64> {
    if a.len() != w * h || b.len() != w * h {
        return Err(RanError::Dimension("luma planes differ from stated size".into()));
    }
    if w < WINDOW || h < WINDOW {
        return Err(RanError::Argument(format!("{w}x{h} image smaller than the {WINDOW}x{WINDOW} window")));
    }
    let k = window_1d();
    let c1 = (K1 * RANGE).powi(2);
    let c2 = (K2 * RANGE).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, mu_b) = (filter_valid(a, w, h, &k), filter_valid(b, w, h, &k));
    let (e_aa, e_bb, e_ab) = (filter_valid(&aa, w, h, &k), filter_valid(&bb, w, h, &k), filter_valid(&ab, w, h, &k));
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// Canonical single-scale SSIM on Rec. 601 luma.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(RanError::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    ssim_luma(&a.luma(), &b.luma(), a.width(), a.height())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tex(seed: usize) -> ImagePlane {
        ImagePlane::from_fn(24, 20, |c, x, y| (((x * 7 + y * 3 + c + seed) * 2654435761usize) % 255) as f32 / 255.0).unwrap()
    }

    #[test]
    fn identity_is_exactly_one() {
        let a = tex(1);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        let (a, b) = (tex(1), tex(2));
        let s = ssim(&a, &b).unwrap();
        assert_eq!(s, ssim(&b, &a).unwrap());
        assert!((-1.0..1.0).contains(&s));
    }

    #[test]
    fn too_small() {
        let a = ImagePlane::filled(10, 30, [0.5; 3]).unwrap();
        assert!(matches!(ssim(&a, &a), Err(RanError::Argument(_))));
    }
}
