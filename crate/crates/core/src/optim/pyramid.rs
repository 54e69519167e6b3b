//! Gaussian blur pyramids with border-validity tracking.
//!
//! Each pyramid level blurs the input with a separable sampled-Gaussian
//! kernel of a fixed size. Pixels whose kernel support touches the image
//! border or any invalid input pixel are marked invalid, so the invalid
//! border widens with the kernel size.

use crate::error::{Error, Result};
use crate::geom::{Camera, ImageBuffer};

use crate::gde::RHO_MIN;

/// Kernel sizes of the initialization pyramid.
pub const PYRAMID_KERNELS: [usize; 8] = [1, 3, 5, 9, 17, 33, 65, 129];

#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub image: ImageBuffer,
    pub kernel_size: usize,
    pub sigma_px: f64,
    pub roughness: f64,
}

/// Kernel standard deviation in pixels: 0.3 ((k - 1) / 2 - 1) + 0.8, the
/// OpenCV default; size 1 means the identity kernel and maps to sigma 0.
pub fn kernel_sigma_px(kernel_size: usize) -> f64 {
    if kernel_size <= 1 {
        0.0
    } else {
        0.3 * ((kernel_size - 1) as f64 / 2.0 - 1.0) + 0.8
    }
}

/// Converts a pyramid blur to an angular roughness: the pixel-space sigma
/// divided by the focal length, floored at [`RHO_MIN`].
pub fn kernel_to_roughness(kernel_size: usize, camera: &Camera) -> f64 {
    (kernel_sigma_px(kernel_size) / camera.fx.max(camera.fy)).max(RHO_MIN)
}

fn sampled_kernel(kernel_size: usize) -> Vec<f64> {
    if kernel_size == 1 {
        return vec![1.0];
    }
    let sigma = kernel_sigma_px(kernel_size);
    let half = (kernel_size as isize - 1) / 2;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur producing a pyramid level without a roughness
/// value attached (see [`blur_level`] for the full record).
pub fn gaussian_blur(img: &ImageBuffer, kernel_size: usize) -> Result<ImageBuffer> {
    if kernel_size % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {kernel_size}")));
    }
    if kernel_size == 1 {
        return Ok(img.clone());
    }
    let kernel = sampled_kernel(kernel_size);
    let half = (kernel_size / 2) as isize;
    let (w, h, ch) = (img.width, img.height, img.channels);

    // Horizontal pass. Out-of-range taps contribute zero; the affected
    // pixels are invalidated below, so their values never matter.
    let mut horiz = ImageBuffer::new(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            let mut acc = vec![0.0; ch];
            let mut valid = true;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = x as isize + ki as isize - half;
                if sx < 0 || sx >= w as isize {
                    valid = false;
                    continue;
                }
                let sx = sx as usize;
                valid &= img.is_valid(sx, y);
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += kv * img.get(sx, y, c);
                }
            }
            horiz.set_pixel(x, y, &acc);
            horiz.set_valid(x, y, valid);
        }
    }

    // Vertical pass.
    let mut out = ImageBuffer::new(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            let mut acc = vec![0.0; ch];
            let mut valid = true;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = y as isize + ki as isize - half;
                if sy < 0 || sy >= h as isize {
                    valid = false;
                    continue;
                }
                let sy = sy as usize;
                valid &= horiz.is_valid(x, sy);
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += kv * horiz.get(x, sy, c);
                }
            }
            out.set_pixel(x, y, &acc);
            out.set_valid(x, y, valid);
        }
    }
    Ok(out)
}

/// One pyramid level with the matching angular roughness.
pub fn blur_level(img: &ImageBuffer, kernel_size: usize, camera: &Camera) -> Result<PyramidLevel> {
    Ok(PyramidLevel {
        image: gaussian_blur(img, kernel_size)?,
        kernel_size,
        sigma_px: kernel_sigma_px(kernel_size),
        roughness: kernel_to_roughness(kernel_size, camera),
    })
}

/// Builds all [`PYRAMID_KERNELS`] levels for one image.
pub fn build_pyramid(img: &ImageBuffer, camera: &Camera) -> Result<Vec<PyramidLevel>> {
    PYRAMID_KERNELS
        .iter()
        .map(|&k| blur_level(img, k, camera))
        .collect()
}
