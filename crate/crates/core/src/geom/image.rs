//! Image buffer with a per-pixel validity mask.
//!
//! Data is row-major, channel-interleaved f64. Invalid pixels are excluded
//! from every loss and metric; they typically come from blur borders.

use crate::error::{Error, Result};

use super::vec3::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            valid: vec![true; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self { width, height, channels, data, valid: vec![true; width * height] })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel_index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.pixel_index(x, y) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let idx = self.pixel_index(x, y) * self.channels + c;
        self.data[idx] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let idx = self.pixel_index(x, y) * self.channels;
        &self.data[idx..idx + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.channels);
        let idx = self.pixel_index(x, y) * self.channels;
        self.data[idx..idx + self.channels].copy_from_slice(values);
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.pixel_index(x, y)]
    }

    pub fn set_valid(&mut self, x: usize, y: usize, v: bool) {
        let idx = self.pixel_index(x, y);
        self.valid[idx] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Reads a pixel as a Vec3 (first three channels).
    pub fn pixel_vec3(&self, x: usize, y: usize) -> Vec3 {
        debug_assert!(self.channels >= 3);
        let p = self.pixel(x, y);
        Vec3::new(p[0], p[1], p[2])
    }

    pub fn set_pixel_vec3(&mut self, x: usize, y: usize, v: Vec3) {
        debug_assert!(self.channels >= 3);
        let idx = self.pixel_index(x, y) * self.channels;
        self.data[idx] = v.x;
        self.data[idx + 1] = v.y;
        self.data[idx + 2] = v.z;
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Iterator over coordinates of jointly valid pixels of two buffers.
    pub fn jointly_valid<'a>(
        &'a self,
        other: &'a ImageBuffer,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        debug_assert!(self.same_shape(other));
        (0..self.height).flat_map(move |y| {
            (0..self.width)
                .filter(move |&x| self.is_valid(x, y) && other.is_valid(x, y))
                .map(move |x| (x, y))
        })
    }

    /// Box downscale by an integer factor; a pixel is valid only when all
    /// contributing source pixels are valid.
    pub fn downscale(&self, factor: usize) -> ImageBuffer {
        assert!(factor >= 1);
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut out = ImageBuffer::new(w, h, self.channels);
        for y in 0..h {
            for x in 0..w {
                let mut acc = vec![0.0; self.channels];
                let mut valid = true;
                let mut count = 0.0;
                for sy in y * factor..((y + 1) * factor).min(self.height) {
                    for sx in x * factor..((x + 1) * factor).min(self.width) {
                        valid &= self.is_valid(sx, sy);
                        for (c, a) in acc.iter_mut().enumerate() {
                            *a += self.get(sx, sy, c);
                        }
                        count += 1.0;
                    }
                }
                for (c, a) in acc.iter().enumerate() {
                    out.set(x, y, c, a / count);
                }
                out.set_valid(x, y, valid);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(ImageBuffer::from_data(2, 2, 3, vec![0.0; 12]).is_ok());
        assert!(ImageBuffer::from_data(2, 2, 3, vec![0.0; 11]).is_err());
    }

    #[test]
    fn downscale_preserves_constant() {
        let mut img = ImageBuffer::new(4, 4, 1);
        img.data.fill(0.25);
        img.set_valid(0, 0, false);
        let small = img.downscale(2);
        assert_eq!(small.width, 2);
        assert!(!small.is_valid(0, 0));
        assert!(small.is_valid(1, 1));
        assert!((small.get(1, 1, 0) - 0.25).abs() < 1e-15);
    }
}
