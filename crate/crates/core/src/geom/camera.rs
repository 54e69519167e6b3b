//! Pinhole camera model and ray generation.
//!
//! Convention: right-handed, view-space +z points forward, image y grows
//! downward. The stored rotation maps view-space vectors to world space and
//! `center` is the camera position in world space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vec3::{Mat3, Vec3};

/// A ray with a cone footprint.
///
/// `base_radius` is the radius of the pixel cone at unit distance along the
/// ray; it drives the finite-difference step of the numerical density
/// gradient and has no effect on the encoding itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub base_radius: f64,
}

impl Default for Ray {
    fn default() -> Self {
        Self { origin: Vec3::ZERO, direction: Vec3::new(0.0, 0.0, 1.0), base_radius: 0.0 }
    }
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, base_radius: f64) -> Self {
        debug_assert!((direction.norm() - 1.0).abs() < 1e-9, "ray direction must be unit");
        debug_assert!(base_radius >= 0.0);
        Self { origin, direction, base_radius }
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pinhole camera with world-from-view pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-from-view rotation.
    pub rotation: Mat3,
    /// Camera center in world space (meters).
    pub center: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        center: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if rotation.orthonormality_error() > 1e-6 {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        if (rotation.det() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation must have determinant +1"));
        }
        Ok(Self { fx, fy, cx, cy, rotation, center, width, height })
    }

    /// Camera at `center` looking at `target` with `up` as the up hint.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        center: Vec3,
        target: Vec3,
        up: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - center).normalized();
        let right = forward.cross(up).try_normalized(1e-9).ok_or_else(|| {
            Error::invalid("look_at: view direction parallel to up vector")
        })?;
        // Image y grows downward, so the view y axis points opposite `up`.
        let down = forward.cross(right);
        let rotation = Mat3::from_rows(
            [right.x, down.x, forward.x],
            [right.y, down.y, forward.y],
            [right.z, down.z, forward.z],
        );
        Camera::new(fx, fy, cx, cy, rotation, center, width, height)
    }

    /// Cone radius of one pixel at unit distance.
    pub fn base_radius(&self) -> f64 {
        1.0 / self.fx.max(self.fy)
    }

    /// Ray through the center of pixel `(u, v)` (integer pixel coordinates).
    pub fn pixel_ray(&self, u: usize, v: usize) -> Ray {
        self.ray_for(u as f64 + 0.5, v as f64 + 0.5)
    }

    /// Ray through the continuous image point `(px, py)` in pixels.
    pub fn ray_for(&self, px: f64, py: f64) -> Ray {
        let dir_view = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        let dir_world = self.rotation.mul_vec(dir_view).normalized();
        Ray::new(self.center, dir_world, self.base_radius())
    }

    /// Converts a view-space normal to world space.
    pub fn normal_to_world(&self, n_view: Vec3) -> Vec3 {
        self.rotation.mul_vec(n_view)
    }

    /// Scales intrinsics and image size by `factor` (0 < factor <= 1).
    pub fn scaled(&self, factor: f64) -> Camera {
        Camera {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            rotation: self.rotation,
            center: self.center,
            width: ((self.width as f64) * factor).round().max(1.0) as usize,
            height: ((self.height as f64) * factor).round().max(1.0) as usize,
        }
    }
}

/// Rays through the centers of the given pixels.
pub fn generate_rays(camera: &Camera, pixels: &[(usize, usize)]) -> Vec<Ray> {
    pixels
        .iter()
        .map(|&(u, v)| {
            debug_assert!(u < camera.width && v < camera.height, "pixel out of bounds");
            camera.pixel_ray(u, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_camera() -> Camera {
        Camera::new(
            100.0,
            100.0,
            32.0,
            24.0,
            Mat3::IDENTITY,
            Vec3::new(1.0, 2.0, 3.0),
            64,
            48,
        )
        .unwrap()
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let cam = test_camera();
        // Pixel center at the principal point: (31.5 + 0.5, 23.5 + 0.5).
        let ray = cam.ray_for(32.0, 24.0);
        assert!((ray.direction - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(ray.origin, cam.center);
    }

    #[test]
    fn base_radius_definition() {
        let cam = test_camera();
        assert!((cam.base_radius() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn corner_pixel_matches_manual_unprojection() {
        let cam = test_camera();
        let ray = cam.pixel_ray(0, 0);
        let manual = Vec3::new((0.5 - 32.0) / 100.0, (0.5 - 24.0) / 100.0, 1.0).normalized();
        assert!((ray.direction - manual).norm() < 1e-12);
    }

    #[test]
    fn look_at_points_forward() {
        let cam = Camera::look_at(
            100.0,
            100.0,
            32.0,
            24.0,
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
            64,
            48,
        )
        .unwrap();
        let ray = cam.ray_for(32.0, 24.0);
        assert!((ray.direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!(cam.rotation.orthonormality_error() < 1e-12);
        assert!((cam.rotation.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rotation() {
        let skewed = Mat3::from_rows([1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        assert!(Camera::new(100.0, 100.0, 0.0, 0.0, skewed, Vec3::ZERO, 8, 8).is_err());
    }
}
