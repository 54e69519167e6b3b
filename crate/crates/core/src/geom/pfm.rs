//! PFM reader/writer (little-endian 32-bit float, scale -1.0).
//!
//! `PF` = 3-channel, `Pf` = 1-channel. Scanlines are stored bottom-to-top
//! per the format convention. Normal maps are stored as (n + 1) / 2;
//! validity masks as single-channel 1.0 / 0.0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::image::ImageBuffer;

/// Writes `img` (1 or 3 channels) as PFM. The validity mask is not stored;
/// pair with [`write_mask`] when it matters.
pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<()> {
    if img.channels != 1 && img.channels != 3 {
        return Err(Error::invalid("pfm supports 1 or 3 channels"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let tag = if img.channels == 3 { "PF" } else { "Pf" };
    write!(w, "{}\n{} {}\n-1.0\n", tag, img.width, img.height)?;
    // Bottom-to-top scanlines.
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in 0..img.channels {
                w.write_all(&(img.get(x, y, c) as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_pfm(&bytes).map_err(|e| Error::malformed(format!("{}: {e}", path.display())))
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<ImageBuffer, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?;
        // Exactly one whitespace byte separates the header from the payload.
        pos = (pos + 1).min(bytes.len());
        Ok(tok.to_string())
    };
    let tag = token()?;
    let channels = match tag.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("bad magic {other:?}")),
    };
    let width: usize = token()?.parse().map_err(|_| "bad width")?;
    let height: usize = token()?.parse().map_err(|_| "bad height")?;
    let scale: f64 = token()?.parse().map_err(|_| "bad scale")?;
    if scale >= 0.0 {
        return Err("big-endian pfm not supported".into());
    }
    let expected = width * height * channels * 4;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(format!("payload {} < expected {}", payload.len(), expected));
    }
    let mut img = ImageBuffer::new(width, height, channels);
    let mut off = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                let v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
                img.set(x, y, c, v as f64);
                off += 4;
            }
        }
    }
    Ok(img)
}

/// Writes the validity mask as single-channel PFM (1.0 valid, 0.0 invalid).
pub fn write_mask(path: &Path, img: &ImageBuffer) -> Result<()> {
    let mut mask = ImageBuffer::new(img.width, img.height, 1);
    for y in 0..img.height {
        for x in 0..img.width {
            mask.set(x, y, 0, if img.is_valid(x, y) { 1.0 } else { 0.0 });
        }
    }
    write_pfm(path, &mask)
}

/// Reads a mask written by [`write_mask`] into the validity of `img`.
pub fn apply_mask(img: &mut ImageBuffer, mask: &ImageBuffer) -> Result<()> {
    if mask.width != img.width || mask.height != img.height || mask.channels != 1 {
        return Err(Error::shape("mask shape mismatch"));
    }
    for y in 0..img.height {
        for x in 0..img.width {
            img.set_valid(x, y, mask.get(x, y, 0) > 0.5);
        }
    }
    Ok(())
}

/// Encodes a unit-normal image (3 channels in [-1, 1]) to the (n+1)/2 range.
pub fn encode_normals(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v = (*v + 1.0) * 0.5;
    }
    out
}

/// Inverse of [`encode_normals`].
pub fn decode_normals(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v = *v * 2.0 - 1.0;
    }
    out
}
