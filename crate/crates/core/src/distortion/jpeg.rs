use std::f64::consts::PI;

use crate::error::{RanError, Result};
use crate::image::ImagePlane;

const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled by the conventional quality factor.
pub fn quant_table(quality: u8) -> [f64; 64] {
    let q = quality as f64;
    let scale = if quality < 50 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut out = [0.0; 64];
    for (o, &t) in out.iter_mut().zip(&LUMA_TABLE) {
        *o = (t as f64 * scale / 100.0).round().max(1.0);
    }
    out
}

/// Orthonormal 8-point DCT-II basis, `basis[k][n]`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (k, row) in b.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * (PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
        }
    }
    b
}

fn dct2(block: &[f64; 64], basis: &[[f64; 8]; 8], inverse: bool) -> [f64; 64] {
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    // rows
    for y in 0..8 {
        for k in 0..8 {
            tmp[y * 8 + k] = (0..8)
                .map(|n| {
                    let b = if inverse { basis[n][k] } else { basis[k][n] };
                    b * block[y * 8 + n]
                })
                .sum();
        }
    }
    // columns
    for x in 0..8 {
        for k in 0..8 {
            out[k * 8 + x] = (0..8)
                .map(|n| {
                    let b = if inverse { basis[n][k] } else { basis[k][n] };
                    b * tmp[n * 8 + x]
                })
                .sum();
        }
    }
    out
}

/// Block-DCT quantization codec without chroma subsampling or entropy coding.
///
/// RGB is converted to full-range YCbCr, every channel is quantized with the
/// scaled luminance table in 8×8 blocks (edge blocks padded by replication),
/// and the result converted back and clamped.
pub fn jpeg_like(img: &ImagePlane, quality: u8) -> Result<ImagePlane> {
    if !(1..=100).contains(&quality) {
        return Err(RanError::Argument(format!("JPEG quality {quality} outside 1..=100")));
    }
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut ycc = vec![vec![0.0f64; n]; 3];
    for i in 0..n {
        let (r, g, b) = (255.0 * r[i] as f64, 255.0 * g[i] as f64, 255.0 * b[i] as f64);
        ycc[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
        ycc[1][i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
        ycc[2][i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    }

    let table = quant_table(quality);
    let basis = dct_basis();
    for plane in ycc.iter_mut() {
        let src = plane.clone();
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        let sy = (by + y).min(h - 1);
                        let sx = (bx + x).min(w - 1);
                        block[y * 8 + x] = src[sy * w + sx] - 128.0;
                    }
                }
                let mut coef = dct2(&block, &basis, false);
                for (c, q) in coef.iter_mut().zip(&table) {
                    *c = (*c / q).round() * q;
                }
                let rec = dct2(&coef, &basis, true);
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        plane[(by + y) * w + bx + x] = rec[y * 8 + x] + 128.0;
                    }
                }
            }
        }
    }

    let mut out = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (y, cb, cr) = (ycc[0][i], ycc[1][i] - 128.0, ycc[2][i] - 128.0);
        out[i] = ((y + 1.402 * cr) / 255.0) as f32;
        out[n + i] = ((y - 0.344136 * cb - 0.714136 * cr) / 255.0) as f32;
        out[2 * n + i] = ((y + 1.772 * cb) / 255.0) as f32;
    }
    ImagePlane::from_unclamped(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_scaling() {
        assert!(quant_table(100).iter().all(|&q| q == 1.0));
        assert_eq!(quant_table(50)[0], 16.0);
        // q = 8 -> scale 625
        assert_eq!(quant_table(8)[0], 100.0);
    }

    #[test]
    fn dct_is_orthonormal() {
        let basis = dct_basis();
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 17) as f64 - 8.0);
        let back = dct2(&dct2(&block, &basis, false), &basis, true);
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_quality_and_is_deterministic() {
        let img = ImagePlane::from_fn(13, 9, |c, x, y| ((x * 5 + y * 3 + c) % 11) as f32 / 10.0).unwrap();
        assert!(jpeg_like(&img, 0).is_err());
        assert!(jpeg_like(&img, 101).is_err());
        assert_eq!(jpeg_like(&img, 30).unwrap(), jpeg_like(&img, 30).unwrap());
        assert_eq!(jpeg_like(&img, 30).unwrap().width(), 13);
    }
}
