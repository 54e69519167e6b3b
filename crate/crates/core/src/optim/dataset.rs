//! Ray dataset for the light-field initialization stage.
//!
//! Every valid pixel of every pyramid level contributes one record: the ray
//! through the pixel, the level's angular roughness and the blurred linear
//! color as target.

use crate::error::{Error, Result};
use crate::geom::{Camera, ImageBuffer, Ray};

use super::pyramid::build_pyramid;

/// Longest image side accepted by the initialization stage.
pub const MAX_INIT_IMAGE_SIDE: usize = 360;

#[derive(Clone, Copy, Debug)]
pub struct RayRecord {
    pub ray: Ray,
    pub roughness: f64,
    pub target: [f64; 3],
}

#[derive(Clone, Debug, Default)]
pub struct RayDataset {
    pub records: Vec<RayRecord>,
}

impl RayDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Builds the ray dataset from images and matching cameras.
///
/// Images must already be downscaled to at most [`MAX_INIT_IMAGE_SIDE`]
/// pixels along the longest axis.
pub fn build_ray_dataset(images: &[ImageBuffer], cameras: &[Camera]) -> Result<RayDataset> {
    if images.len() != cameras.len() {
        return Err(Error::shape(format!(
            "{} images vs {} cameras",
            images.len(),
            cameras.len()
        )));
    }
    let mut records = Vec::new();
    for (img, cam) in images.iter().zip(cameras.iter()) {
        if img.width.max(img.height) > MAX_INIT_IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "image {}x{} exceeds the {}px initialization limit",
                img.width, img.height, MAX_INIT_IMAGE_SIDE
            )));
        }
        if img.width != cam.width || img.height != cam.height {
            return Err(Error::shape("image size does not match camera"));
        }
        if img.channels != 3 {
            return Err(Error::shape("ray dataset expects 3-channel images"));
        }
        for level in build_pyramid(img, cam)? {
            for y in 0..img.height {
                for x in 0..img.width {
                    if !level.image.is_valid(x, y) {
                        continue;
                    }
                    let px = level.image.pixel(x, y);
                    records.push(RayRecord {
                        ray: cam.pixel_ray(x, y),
                        roughness: level.roughness,
                        target: [px[0], px[1], px[2]],
                    });
                }
            }
        }
    }
    Ok(RayDataset { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{generate_rays, Mat3, Vec3};
    use crate::optim::pyramid::{build_pyramid, PYRAMID_KERNELS};

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(
            50.0,
            50.0,
            w as f64 / 2.0,
            h as f64 / 2.0,
            Mat3::IDENTITY,
            Vec3::ZERO,
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn record_count_equals_valid_pixels_over_levels() {
        let cam = camera(20, 14);
        let mut img = ImageBuffer::new(20, 14, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 7.0;
        }
        img.set_valid(3, 3, false);
        let ds = build_ray_dataset(&[img.clone()], &[cam.clone()]).unwrap();
        let expected: usize = build_pyramid(&img, &cam)
            .unwrap()
            .iter()
            .map(|lvl| lvl.image.valid_count())
            .sum();
        assert_eq!(ds.len(), expected);
    }

    #[test]
    fn tiny_image_loses_large_kernels() {
        // A 2x2 image only survives the identity kernel; all blurred levels
        // have their whole area invalidated by the border rule.
        let cam = camera(2, 2);
        let img = ImageBuffer::new(2, 2, 3);
        let ds = build_ray_dataset(&[img], &[cam]).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.len() <= 4 * PYRAMID_KERNELS.len());
    }

    #[test]
    fn rays_match_generate_rays() {
        let cam = camera(16, 12);
        let mut img = ImageBuffer::new(16, 12, 3);
        img.data.fill(0.5);
        let ds = build_ray_dataset(&[img], &[cam.clone()]).unwrap();
        // Level 0 (identity) has all pixels valid in row-major order.
        let pixels: Vec<(usize, usize)> =
            (0..12).flat_map(|y| (0..16).map(move |x| (x, y))).collect();
        let rays = generate_rays(&cam, &pixels);
        for (rec, ray) in ds.records.iter().take(16 * 12).zip(rays.iter()) {
            assert!((rec.ray.direction - ray.direction).norm() < 1e-15);
            assert_eq!(rec.ray.base_radius, ray.base_radius);
        }
    }

    #[test]
    fn mismatched_counts_rejected() {
        let cam = camera(4, 4);
        assert!(build_ray_dataset(&[], &[cam]).is_err());
    }

    #[test]
    fn oversized_image_rejected() {
        let cam = camera(400, 4);
        let img = ImageBuffer::new(400, 4, 3);
        assert!(build_ray_dataset(&[img], &[cam]).is_err());
    }
}
