//! Binary PPM (P6, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{RanError, Result};
use crate::image::ImagePlane;

pub fn encode_ppm(img: &ImagePlane) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_rgb8());
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RanError::Format(format!("bad PPM {what} at byte {start}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImagePlane> {
    if !bytes.starts_with(b"P6") {
        return Err(RanError::Format("not a binary PPM (missing P6 magic)".into()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(RanError::Unsupported(format!("PPM maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(RanError::Format(format!("empty PPM {width}x{height}")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(RanError::Format(format!("missing separator after PPM header at byte {}", h.pos)));
    }
    let data = &bytes[h.pos + 1..];
    let need = 3 * width * height;
    if data.len() < need {
        return Err(RanError::Format(format!(
            "truncated PPM: {} of {need} pixel bytes",
            data.len()
        )));
    }
    ImagePlane::from_rgb8(width, height, &data[..need])
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| RanError::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn save_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| RanError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_header() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend(0..12u8);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.to_rgb8(), (0..12u8).collect::<Vec<_>>());
        assert_eq!(encode_ppm(&img), bytes);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        assert_eq!(decode_ppm(&bytes).unwrap().to_rgb8(), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(decode_ppm(b"P6\n2 2\n65535\n"), Err(RanError::Unsupported(_))));
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(RanError::Format(_))));
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(RanError::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = ImagePlane::from_fn(5, 3, |c, x, y| ((c * 31 + x * 7 + y * 13) % 256) as f32 / 255.0).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
        assert_eq!(back, img);
    }
}
