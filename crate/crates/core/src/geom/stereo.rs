//! Stereographic projection from the unit sphere, pole at (0, 0, -1).
//!
//! The north pole (0, 0, 1) maps to the origin and the equator to the unit
//! circle; the map is conformal and undefined exactly at the pole.

use crate::error::{Error, Result};

use super::vec3::Vec3;

const POLE_EPS: f64 = 1e-12;

/// Projects a unit direction to the plane: (s, t) = (x, y) / (1 + z).
pub fn stereographic_project(dir: Vec3) -> Result<(f64, f64)> {
    debug_assert!((dir.norm() - 1.0).abs() < 1e-6);
    let denom = 1.0 + dir.z;
    if denom.abs() < POLE_EPS {
        return Err(Error::ProjectionPole);
    }
    Ok((dir.x / denom, dir.y / denom))
}

/// Inverse map; covers the whole sphere minus the pole.
pub fn stereographic_unproject(s: f64, t: f64) -> Vec3 {
    let r2 = s * s + t * t;
    let denom = 1.0 + r2;
    Vec3::new(2.0 * s / denom, 2.0 * t / denom, (1.0 - r2) / denom)
}
