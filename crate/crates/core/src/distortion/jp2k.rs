use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{RanError, Result};
use crate::image::{ImagePlane, CHANNELS};

pub const LEVELS: usize = 4;
const ALIGN: usize = 1 << LEVELS;

/// One orthonormal Haar analysis step on `n` samples spaced by `stride`.
fn haar_forward(buf: &mut [f64], start: usize, stride: usize, n: usize, tmp: &mut Vec<f64>) {
    tmp.clear();
    let half = n / 2;
    tmp.resize(n, 0.0);
    for i in 0..half {
        let a = buf[start + 2 * i * stride];
        let b = buf[start + (2 * i + 1) * stride];
        tmp[i] = (a + b) * FRAC_1_SQRT_2;
        tmp[half + i] = (a - b) * FRAC_1_SQRT_2;
    }
    for (i, &v) in tmp.iter().enumerate() {
        buf[start + i * stride] = v;
    }
}

fn haar_inverse(buf: &mut [f64], start: usize, stride: usize, n: usize, tmp: &mut Vec<f64>) {
    tmp.clear();
    let half = n / 2;
    tmp.resize(n, 0.0);
    for i in 0..half {
        let s = buf[start + i * stride];
        let d = buf[start + (half + i) * stride];
        tmp[2 * i] = (s + d) * FRAC_1_SQRT_2;
        tmp[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    for (i, &v) in tmp.iter().enumerate() {
        buf[start + i * stride] = v;
    }
}

/// In-place multi-level 2-D Haar transform of a `w × h` plane; both extents
/// must be divisible by `2^levels`.
pub fn dwt2(plane: &mut [f64], w: usize, h: usize, levels: usize) {
    let mut tmp = Vec::new();
    let (mut cw, mut ch) = (w, h);
    for _ in 0..levels {
        for y in 0..ch {
            haar_forward(plane, y * w, 1, cw, &mut tmp);
        }
        for x in 0..cw {
            haar_forward(plane, x, w, ch, &mut tmp);
        }
        cw /= 2;
        ch /= 2;
    }
}

pub fn idwt2(plane: &mut [f64], w: usize, h: usize, levels: usize) {
    let mut tmp = Vec::new();
    for l in (0..levels).rev() {
        let (cw, ch) = (w >> l, h >> l);
        for x in 0..cw {
            haar_inverse(plane, x, w, ch, &mut tmp);
        }
        for y in 0..ch {
            haar_inverse(plane, y * w, 1, cw, &mut tmp);
        }
    }
}

/// Zero all but the `ceil(keep · n)` largest-magnitude coefficients
/// (ties broken by position).
fn keep_largest(coef: &mut [f64], keep_fraction: f64) {
    let n = coef.len();
    let k = ((keep_fraction * n as f64).ceil() as usize).clamp(1, n);
    if k == n {
        return;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| {
        coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b))
    });
    let mut keep = vec![false; n];
    for &i in &idx[..k] {
        keep[i] = true;
    }
    for (c, kept) in coef.iter_mut().zip(keep) {
        if !kept {
            *c = 0.0;
        }
    }
}

/// Wavelet-truncation codec: 4-level Haar per channel, keep the largest
/// `keep_fraction` of coefficients, reconstruct, clamp. Planes are padded by
/// edge replication to a multiple of 16 and cropped back.
pub fn jp2k_like(img: &ImagePlane, keep_fraction: f64) -> Result<ImagePlane> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(RanError::Argument(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w.div_ceil(ALIGN) * ALIGN, h.div_ceil(ALIGN) * ALIGN);
    let mut out = Vec::with_capacity(CHANNELS * w * h);
    for c in 0..CHANNELS {
        let src = img.plane(c);
        let mut buf: Vec<f64> = (0..pw * ph)
            .map(|i| src[(i / pw).min(h - 1) * w + (i % pw).min(w - 1)] as f64)
            .collect();
        dwt2(&mut buf, pw, ph, LEVELS);
        keep_largest(&mut buf, keep_fraction);
        idwt2(&mut buf, pw, ph, LEVELS);
        for y in 0..h {
            out.extend(buf[y * pw..y * pw + w].iter().map(|&v| v as f32));
        }
    }
    ImagePlane::from_unclamped(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, |c, x, y| ((x * 7 + y * 13 + c * 5) % 23) as f32 / 22.0).unwrap()
    }

    #[test]
    fn transform_round_trip_and_energy() {
        let (w, h) = (32, 16);
        let orig: Vec<f64> = (0..w * h).map(|i| ((i * 31) % 97) as f64 / 7.0).collect();
        let mut buf = orig.clone();
        dwt2(&mut buf, w, h, LEVELS);
        let e0: f64 = orig.iter().map(|v| v * v).sum();
        let e1: f64 = buf.iter().map(|v| v * v).sum();
        assert!((e0 - e1).abs() < 1e-9 * e0);
        idwt2(&mut buf, w, h, LEVELS);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_keep_reconstructs() {
        for (w, h) in [(32, 32), (37, 21)] {
            let img = textured(w, h);
            let out = jp2k_like(&img, 1.0).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_survives_heavy_truncation() {
        let img = ImagePlane::filled(64, 48, [0.2, 0.6, 0.9]).unwrap();
        let out = jp2k_like(&img, 0.012).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_fraction() {
        let img = textured(16, 16);
        assert!(jp2k_like(&img, 0.0).is_err());
        assert!(jp2k_like(&img, 1.5).is_err());
    }
}
