//! 8-bit PNG export/import for previews. Linear values are converted with
//! the sRGB transfer function on the way out and back.

use std::path::Path;

use crate::error::{Error, Result};

use super::image::ImageBuffer;

fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Writes a linear RGB buffer as 8-bit sRGB PNG. Invalid pixels come out
/// black.
pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    if img.channels != 3 && img.channels != 1 {
        return Err(Error::invalid("png export supports 1 or 3 channels"));
    }
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let px = if img.is_valid(x, y) {
                let to8 = |v: f64| (linear_to_srgb(v) * 255.0).round().clamp(0.0, 255.0) as u8;
                if img.channels == 3 {
                    let p = img.pixel(x, y);
                    [to8(p[0]), to8(p[1]), to8(p[2])]
                } else {
                    let g = to8(img.get(x, y, 0));
                    [g, g, g]
                }
            } else {
                [0, 0, 0]
            };
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out.save(path).map_err(|e| Error::malformed(format!("png write: {e}")))
}

/// Reads an 8-bit PNG into a linear RGB buffer.
pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| Error::malformed(format!("png read: {e}")))?
        .to_rgb8();
    let mut out = ImageBuffer::new(img.width() as usize, img.height() as usize, 3);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out.set(x as usize, y as usize, c, srgb_to_linear(px.0[c] as f64 / 255.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_round_trip() {
        for v in [0.0, 0.001, 0.01, 0.2, 0.5, 0.9, 1.0] {
            assert!((srgb_to_linear(linear_to_srgb(v)) - v).abs() < 1e-12);
        }
    }
}
