//! Feature similarity (FSIM) on luma, built on log-Gabor phase congruency.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{RanError, Result};
use crate::image::ImagePlane;

/// Log-Gabor filter-bank parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcParams {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    pub sigma_on_f: f64,
    /// Angular standard deviation of each orientation's spread, radians.
    pub theta_sigma: f64,
    /// Noise threshold in standard deviations above the noise mean.
    pub k: f64,
    pub epsilon: f64,
}

impl Default for PcParams {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 4,
            min_wavelength: 6.0,
            mult: 2.0,
            sigma_on_f: 0.55,
            theta_sigma: 0.4,
            k: 2.0,
            epsilon: 1e-4,
        }
    }
}

const T1: f64 = 0.85;
const T2: f64 = 160.0;
pub const MIN_SIDE: usize = 32;

struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            w,
            h,
            row_fwd: p.plan_fft_forward(w),
            row_inv: p.plan_fft_inverse(w),
            col_fwd: p.plan_fft_forward(h),
            col_inv: p.plan_fft_inverse(h),
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.w, self.h);
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(buf);
        let mut t = vec![Complex64::default(); w * h];
        for y in 0..h {
            for x in 0..w {
                t[x * h + y] = buf[y * w + x];
            }
        }
        cols.process(&mut t);
        let norm = if inverse { 1.0 / (w * h) as f64 } else { 1.0 };
        for y in 0..h {
            for x in 0..w {
                buf[y * w + x] = t[x * h + y] * norm;
            }
        }
    }
}

/// Normalized frequency of FFT bin `j` out of `n`, matching an
/// `ifftshift`-ed grid spanning ±0.5.
fn freq(j: usize, n: usize) -> f64 {
    let p = n / 2;
    let denom = if n.is_multiple_of(2) { n } else { n - 1 }.max(1) as f64;
    let k = if j < n - p { j as f64 } else { j as f64 - n as f64 };
    k / denom
}

fn median(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    v.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map of a luma plane, values in `[0, 1]`.
pub fn phase_congruency(img: &[f64], w: usize, h: usize, p: &PcParams) -> Vec<f64> {
    let n = w * h;
    let (lo, hi) = img.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo == 0.0 {
        return vec![0.0; n];
    }
    let fft = Fft2::new(w, h);
    let mut spectrum: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.run(&mut spectrum, false);

    // Polar frequency grid with DC at index 0.
    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (freq(x, w), freq(y, h));
            let r = (fx * fx + fy * fy).sqrt();
            let i = y * w + x;
            lowpass[i] = 1.0 / (1.0 + (r / 0.45).powi(30));
            radius[i] = r;
            let th = (-fy).atan2(fx);
            sin_t[i] = th.sin();
            cos_t[i] = th.cos();
        }
    }
    radius[0] = 1.0;

    let log_gabor: Vec<Vec<f64>> = (0..p.scales)
        .map(|s| {
            let fo = 1.0 / (p.min_wavelength * p.mult.powi(s as i32));
            let denom = 2.0 * p.sigma_on_f.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    let sqrt_n = (n as f64).sqrt();
    for o in 0..p.orientations {
        let angle = o as f64 * PI / p.orientations as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * p.theta_sigma * p.theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut eo: Vec<Vec<Complex64>> = Vec::with_capacity(p.scales);
        let mut spatial_filters: Vec<Vec<f64>> = Vec::with_capacity(p.scales);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            if s == 0 {
                em_n = filter.iter().map(|v| v * v).sum();
            }
            let mut f: Vec<Complex64> = filter.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.run(&mut f, true);
            spatial_filters.push(f.iter().map(|c| c.re * sqrt_n).collect());

            let mut resp: Vec<Complex64> = spectrum.iter().zip(&filter).map(|(c, &v)| c * v).collect();
            fft.run(&mut resp, true);
            for i in 0..n {
                sum_an[i] += resp[i].norm();
                sum_e[i] += resp[i].re;
                sum_o[i] += resp[i].im;
            }
            eo.push(resp);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let xe = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + p.epsilon;
            let (me, mo) = (sum_e[i] / xe, sum_o[i] / xe);
            for r in &eo {
                let (e, od) = (r[i].re, r[i].im);
                energy[i] += e * me + od * mo - (e * mo - od * me).abs();
            }
        }

        // Noise compensation from the smallest-scale response statistics.
        let median_e2n = median(eo[0].iter().map(|c| c.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;
        let mut est_sum_an2 = 0.0;
        let mut est_sum_ai_aj = 0.0;
        for i in 0..n {
            for si in 0..p.scales {
                let a = spatial_filters[si][i];
                est_sum_an2 += a * a;
                for sj in si + 1..p.scales {
                    est_sum_ai_aj += a * spatial_filters[sj][i];
                }
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * est_sum_an2 + 4.0 * noise_power * est_sum_ai_aj;
        let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (est_noise_energy + p.k * est_noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 1e-8 { (e / a).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Scharr gradient magnitude with replicated borders.
pub fn gradient_magnitude(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        img[yc * w + xc]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (3.0 * (at(x + 1, y - 1) - at(x - 1, y - 1))
                + 10.0 * (at(x + 1, y) - at(x - 1, y))
                + 3.0 * (at(x + 1, y + 1) - at(x - 1, y + 1)))
                / 16.0;
            let gy = (3.0 * (at(x - 1, y + 1) - at(x - 1, y - 1))
                + 10.0 * (at(x, y + 1) - at(x, y - 1))
                + 3.0 * (at(x + 1, y + 1) - at(x + 1, y - 1)))
                / 16.0;
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Average-and-decimate by `f` (zero-padded 'same' box filter, top-left aligned sampling).
fn downsample(img: &[f64], w: usize, h: usize, f: usize) -> (Vec<f64>, usize, usize) {
    if f <= 1 {
        return (img.to_vec(), w, h);
    }
    let off = ((f - 1) / 2) as isize;
    let (ow, oh) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = Vec::with_capacity(ow * oh);
    let inv = 1.0 / (f * f) as f64;
    for oy in 0..oh {
        for ox in 0..ow {
            let (cx, cy) = ((ox * f) as isize, (oy * f) as isize);
            let mut acc = 0.0;
            for dy in 0..f as isize {
                for dx in 0..f as isize {
                    let (x, y) = (cx + dx - off, cy + dy - off);
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        acc += img[y as usize * w + x as usize];
                    }
                }
            }
            out.push(acc * inv);
        }
    }
    (out, ow, oh)
}

/// Pooled FSIM score and the total pooling mass `Σ max(PC_a, PC_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsimScore {
    pub score: f64,
    pub pc_mass: f64,
}

/// FSIM of two luma planes (0..255 scale).
pub fn fsim_luma(a: &[f64], b: &[f64], w: usize, h: usize, params: &PcParams) -> Result<FsimScore> {
    if a.len() != w * h || b.len() != w * h {
        return Err(RanError::Dimension("luma planes differ from stated size".into()));
    }
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(RanError::Argument(format!("FSIM needs at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}")));
    }
    let f = ((w.min(h) as f64 / 256.0).round() as usize).max(1);
    let (a, w2, h2) = downsample(a, w, h, f);
    let (b, _, _) = downsample(b, w, h, f);
    let pc_a = phase_congruency(&a, w2, h2, params);
    let pc_b = phase_congruency(&b, w2, h2, params);
    let g_a = gradient_magnitude(&a, w2, h2);
    let g_b = gradient_magnitude(&b, w2, h2);
    let (mut num, mut mass) = (0.0, 0.0);
    for i in 0..w2 * h2 {
        let (p, q) = (pc_a[i], pc_b[i]);
        let s_pc = (2.0 * p * q + T1) / (p * p + q * q + T1);
        let (g, k) = (g_a[i], g_b[i]);
        let s_g = (2.0 * g * k + T2) / (g * g + k * k + T2);
        let pcm = p.max(q);
        num += s_pc * s_g * pcm;
        mass += pcm;
    }
    let score = if mass > 0.0 { (num / mass).min(1.0) } else { 1.0 };
    Ok(FsimScore { score, pc_mass: mass })
}

/// FSIM on Rec. 601 luma with the default filter bank.
pub fn fsim(a: &ImagePlane, b: &ImagePlane) -> Result<FsimScore> {
    if !a.same_dims(b) {
        return Err(RanError::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    fsim_luma(&a.luma(), &b.luma(), a.width(), a.height(), &PcParams::default())
}
