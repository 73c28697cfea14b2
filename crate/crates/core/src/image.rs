use ran_tensor::Tensor;

use crate::error::{RanError, Result};

pub const CHANNELS: usize = 3;

/// RGB image with values in `[0, 1]`, stored as three planes (R, G, B),
/// each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RanError::Argument(format!("empty image {width}x{height}")));
        }
        if data.len() != CHANNELS * width * height {
            return Err(RanError::Dimension(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                CHANNELS * width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RanError::Argument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Build from arbitrary values, clamping each into `[0, 1]` (NaN maps to 0).
    pub fn from_unclamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(CHANNELS * width * height);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, width * height));
        }
        Self::new(width, height, data)
    }

    /// `f(channel, x, y)`, clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(CHANNELS * width * height);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::from_unclamped(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_dims(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Interleaved 8-bit RGB: `round(v · 255)` clamped.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..CHANNELS {
                out.push(to_u8(self.data[c * n + i]));
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let n = width * height;
        if bytes.len() != 3 * n {
            return Err(RanError::Dimension(format!(
                "{width}x{height} RGB8 needs {} bytes, got {}",
                3 * n,
                bytes.len()
            )));
        }
        let mut data = vec![0.0f32; 3 * n];
        for i in 0..n {
            for c in 0..CHANNELS {
                data[c * n + i] = bytes[3 * i + c] as f32 / 255.0;
            }
        }
        Self::new(width, height, data)
    }

    /// Rec. 601 luma on the 0..255 scale.
    pub fn luma(&self) -> Vec<f64> {
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 255.0 * (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64))
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(RanError::Argument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * w * h);
        for c in 0..CHANNELS {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Per-pixel standard deviation over all channels.
    pub fn std_dev(&self) -> f64 {
        let n = self.data.len() as f64;
        let mean = self.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        (self.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

pub fn to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Stack equally sized images into a `[n, 3, h, w]` tensor.
pub fn batch_tensor(images: &[&ImagePlane]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| RanError::Argument("empty image batch".into()))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * CHANNELS * w * h);
    for img in images {
        if img.width != w || img.height != h {
            return Err(RanError::Dimension("batch images differ in size".into()));
        }
        data.extend_from_slice(&img.data);
    }
    Ok(Tensor::new(vec![images.len(), CHANNELS, h, w], data)?)
}

/// Split a `[n, 3, h, w]` tensor into images, clamping into `[0, 1]`.
pub fn unbatch_tensor(t: &Tensor<f32>) -> Result<Vec<ImagePlane>> {
    let d = t.dims();
    if d.len() != 4 || d[1] != CHANNELS {
        return Err(RanError::Dimension(format!("expected [n, 3, h, w], got {d:?}")));
    }
    let per = CHANNELS * d[2] * d[3];
    t.data()
        .chunks(per)
        .map(|c| ImagePlane::from_unclamped(d[3], d[2], c.to_vec()))
        .collect()
}
