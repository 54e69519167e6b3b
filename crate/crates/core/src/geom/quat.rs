//! Unit quaternions for rotations, component order (w, x, y, z).
//!
//! Rotations always go through an internal normalization so that gradients
//! taken with respect to the raw four components stay well defined, and an
//! optimizer can treat the components as unconstrained.

use serde::{Deserialize, Serialize};

use super::vec3::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle_rad * 0.5).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Shortest rotation taking unit vector `from` onto unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Self {
        let c = from.dot(to);
        if c < -1.0 + 1e-12 {
            // Antiparallel: rotate half a turn about any orthogonal axis.
            let (e1, _) = from.tangent_frame();
            return Self::from_axis_angle(e1, std::f64::consts::PI);
        }
        let axis = from.cross(to);
        Self::new(1.0 + c, axis.x, axis.y, axis.z).normalized()
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quaternion {
        let n = self.norm();
        debug_assert!(n > 0.0, "normalizing zero quaternion");
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Quaternion {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_matrix(self) -> Mat3 {
        let q = self.normalized();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        Mat3::from_rows(
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        )
    }
}

/// Applies the rotation `q` to `v`.
///
/// `q` is normalized internally, so slightly drifted quaternions rotate the
/// same way as their unit projection.
pub fn quat_rotate(q: Quaternion, v: Vec3) -> Vec3 {
    let q = q.normalized();
    let r = Vec3::new(q.x, q.y, q.z);
    // v + 2 r x (r x v + w v)
    let t = r.cross(v) + q.w * v;
    v + 2.0 * r.cross(t)
}

/// d(R(q_hat) v)/dq_hat for a *unit* quaternion, contracted with `upstream`.
///
/// Returns dL/d(w,x,y,z) given dL/d(Rv) = `upstream`, without the
/// normalization Jacobian (see [`normalize_jacobian_apply`]).
pub fn quat_rotate_grad_q(q_unit: Quaternion, v: Vec3, upstream: Vec3) -> [f64; 4] {
    let (w, x, y, z) = (q_unit.w, q_unit.x, q_unit.y, q_unit.z);
    // Partial derivatives of the rotation matrix, times v.
    let dw = Vec3::new(
        -z * v.y + y * v.z,
        z * v.x - x * v.z,
        -y * v.x + x * v.y,
    ) * 2.0;
    let dx = Vec3::new(
        y * v.y + z * v.z,
        y * v.x - 2.0 * x * v.y - w * v.z,
        z * v.x + w * v.y - 2.0 * x * v.z,
    ) * 2.0;
    let dy = Vec3::new(
        -2.0 * y * v.x + x * v.y + w * v.z,
        x * v.x + z * v.z,
        -w * v.x + z * v.y - 2.0 * y * v.z,
    ) * 2.0;
    let dz = Vec3::new(
        -2.0 * z * v.x - w * v.y + x * v.z,
        w * v.x - 2.0 * z * v.y + y * v.z,
        x * v.x + y * v.y,
    ) * 2.0;
    [upstream.dot(dw), upstream.dot(dx), upstream.dot(dy), upstream.dot(dz)]
}

/// Chains a gradient w.r.t. the unit quaternion through q_hat = q / |q|.
///
/// dL/dq = (I - q_hat q_hat^T) / |q| * dL/dq_hat — the tangent-space
/// projection falls out of the normalization.
pub fn normalize_jacobian_apply(q_raw: Quaternion, grad_unit: [f64; 4]) -> [f64; 4] {
    let n = q_raw.norm();
    let qh = q_raw.normalized().to_array();
    let dot: f64 = (0..4).map(|i| qh[i] * grad_unit[i]).sum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (grad_unit[i] - qh[i] * dot) / n;
    }
    out
}
