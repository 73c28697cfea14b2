use crate::image::{ImagePlane, CHANNELS};

/// Normalized 1-D Gaussian taps over `[-ceil(3σ), ceil(3σ)]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mirror an out-of-range index back into `0..n` (edge sample repeated).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_line(src: &[f64], dst: &mut [f64], kernel: &[f64], stride: usize, len: usize, start: usize) {
    let r = (kernel.len() / 2) as isize;
    for i in 0..len {
        let mut acc = 0.0;
        for (t, &w) in kernel.iter().enumerate() {
            let j = reflect(i as isize + t as isize - r, len);
            acc += w * src[start + j * stride];
        }
        dst[start + i * stride] = acc;
    }
}

/// Separable Gaussian blur with reflected borders. `sigma = 0` is the identity.
pub fn gaussian_blur(img: &ImagePlane, sigma: f64) -> ImagePlane {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(img.data().len());
    for c in 0..CHANNELS {
        let src: Vec<f64> = img.plane(c).iter().map(|&v| v as f64).collect();
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            convolve_line(&src, &mut tmp, &kernel, 1, w, y * w);
        }
        let mut res = vec![0.0; w * h];
        for x in 0..w {
            convolve_line(&tmp, &mut res, &kernel, w, h, x);
        }
        out.extend(res.into_iter().map(|v| v as f32));
    }
    ImagePlane::from_unclamped(w, h, out).expect("dims preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_radius_and_normalization() {
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 2 * 5 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-9, 2), 0);
    }

    #[test]
    fn constant_and_zero_sigma() {
        let img = ImagePlane::filled(9, 7, [0.25, 0.5, 0.75]).unwrap();
        let out = gaussian_blur(&img, 3.0);
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let tex = ImagePlane::from_fn(5, 5, |c, x, y| ((c * 7 + x * 3 + y) % 5) as f32 / 4.0).unwrap();
        assert_eq!(gaussian_blur(&tex, 0.0), tex);
    }

    #[test]
    fn impulse_response_is_outer_product() {
        // Independent 1-D kernel: sampled Gaussian, radius 5, normalized.
        let sigma = 1.5f64;
        let raw: Vec<f64> = (-5..=5).map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = raw.iter().sum();
        let k1: Vec<f64> = raw.iter().map(|v| v / s).collect();

        let n = 21;
        let img = ImagePlane::from_fn(n, n, |_, x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_blur(&img, sigma);
        for dy in 0..11 {
            for dx in 0..11 {
                let want = k1[dy] * k1[dx];
                let got = out.get(1, 5 + dx, 5 + dy) as f64;
                assert!((got - want).abs() < 1e-7, "({dx},{dy}) {got} vs {want}");
            }
        }
    }
}
