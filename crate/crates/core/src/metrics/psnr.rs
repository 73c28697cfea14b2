use crate::error::{RanError, Result};
use crate::image::ImagePlane;

/// PSNR in dB over all RGB channels on the 0..255 scale.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(RanError::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = 255.0 * (x as f64 - y as f64);
            d * d
        })
        .sum();
    let mse = sse / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}
