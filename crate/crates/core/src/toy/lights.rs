//! Analytic area lights and seeded toy layouts.
//!
//! Four flat emitters of distinct shapes and colors hang above a probe
//! track. Radiance queries intersect rays against the light planes with no
//! occlusion between lights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Quaternion, Ray, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LightShape {
    Disc { radius: f64 },
    Rectangle { half_u: f64, half_v: f64 },
    Ring { outer: f64, inner: f64 },
    /// Vertices in the light plane's (u, v) coordinates.
    Triangle { verts: [[f64; 2]; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyLight {
    pub shape: LightShape,
    pub center: Vec3,
    /// Plane normal; emission is double-sided.
    pub normal: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub radiance: Vec3,
}

impl ToyLight {
    pub fn flat(shape: LightShape, center: Vec3, normal: Vec3, radiance: Vec3) -> Self {
        let n = normal.normalized();
        let (u_axis, v_axis) = n.tangent_frame();
        Self { shape, center, normal: n, u_axis, v_axis, radiance }
    }

    /// Ray-light intersection distance, if any.
    pub fn hit(&self, ray: &Ray) -> Option<f64> {
        let denom = ray.direction.dot(self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - ray.origin).dot(self.normal) / denom;
        if t <= 1e-9 {
            return None;
        }
        let p = ray.point_at(t) - self.center;
        let (u, v) = (p.dot(self.u_axis), p.dot(self.v_axis));
        let inside = match self.shape {
            LightShape::Disc { radius } => u * u + v * v <= radius * radius,
            LightShape::Rectangle { half_u, half_v } => u.abs() <= half_u && v.abs() <= half_v,
            LightShape::Ring { outer, inner } => {
                let r2 = u * u + v * v;
                r2 <= outer * outer && r2 >= inner * inner
            }
            LightShape::Triangle { verts } => point_in_triangle(u, v, &verts),
        };
        inside.then_some(t)
    }

    /// A rough linear extent of the emitting region.
    pub fn extent(&self) -> f64 {
        match self.shape {
            LightShape::Disc { radius } => 2.0 * radius,
            LightShape::Rectangle { half_u, half_v } => 2.0 * half_u.max(half_v),
            LightShape::Ring { outer, .. } => 2.0 * outer,
            LightShape::Triangle { verts } => {
                let mut m: f64 = 0.0;
                for v in verts {
                    m = m.max((v[0] * v[0] + v[1] * v[1]).sqrt());
                }
                2.0 * m
            }
        }
    }

    /// Deterministic surface points covering the emitter, used to seed
    /// Gaussians on the light.
    pub fn surface_points(&self, count: usize) -> Vec<Vec3> {
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        (0..count)
            .map(|i| {
                let frac = (i as f64 + 0.5) / count as f64;
                let ang = golden * i as f64;
                let (u, v) = match self.shape {
                    LightShape::Disc { radius } => {
                        let r = radius * frac.sqrt();
                        (r * ang.cos(), r * ang.sin())
                    }
                    LightShape::Rectangle { half_u, half_v } => {
                        // Low-discrepancy lattice over the rectangle.
                        let a = (i as f64 * 0.754_877_666_2).fract() * 2.0 - 1.0;
                        let b = (i as f64 * 0.569_840_290_998).fract() * 2.0 - 1.0;
                        (half_u * a, half_v * b)
                    }
                    LightShape::Ring { outer, inner } => {
                        let r = inner + (outer - inner) * 0.5;
                        let theta = 2.0 * std::f64::consts::PI * frac;
                        (r * theta.cos(), r * theta.sin())
                    }
                    LightShape::Triangle { verts } => {
                        // Cycle corners toward the centroid.
                        let k = i % 3;
                        let cx = (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0;
                        let cy = (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0;
                        let blend = 0.35 + 0.3 * frac;
                        (
                            cx + (verts[k][0] - cx) * blend,
                            cy + (verts[k][1] - cy) * blend,
                        )
                    }
                };
                self.center + self.u_axis * u + self.v_axis * v
            })
            .collect()
    }

    /// Orientation aligning the local z axis with the light normal.
    pub fn frame_rotation(&self) -> Quaternion {
        Quaternion::rotation_between(self.normal, Vec3::new(0.0, 0.0, 1.0))
    }
}

fn point_in_triangle(u: f64, v: f64, verts: &[[f64; 2]; 3]) -> bool {
    let sign = |a: [f64; 2], b: [f64; 2]| (u - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (v - b[1]);
    let d1 = sign(verts[0], verts[1]);
    let d2 = sign(verts[1], verts[2]);
    let d3 = sign(verts[2], verts[0]);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

/// Radiance of the first light hit by the ray (x, dir); black otherwise.
pub fn toy_env_radiance(lights: &[ToyLight], x: Vec3, dir: Vec3) -> Vec3 {
    let ray = Ray { origin: x, direction: dir, base_radius: 0.0 };
    let mut best: Option<(f64, Vec3)> = None;
    for light in lights {
        if let Some(t) = light.hit(&ray) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, light.radiance));
            }
        }
    }
    best.map_or(Vec3::ZERO, |(_, r)| r)
}

/// Four lights of different shapes and colors above the probe region.
/// Placement jitters with the seed; shapes and hues stay fixed.
pub fn toy_light_layout(rng: &mut impl Rng) -> Vec<ToyLight> {
    let down = Vec3::new(0.0, 0.0, -1.0);
    let mut jitter = |a: f64, b: f64| rng.gen_range(a..b);
    let z = 2.0;
    vec![
        ToyLight::flat(
            LightShape::Disc { radius: jitter(0.22, 0.34) },
            Vec3::new(jitter(-1.6, -1.0), jitter(-0.4, 0.4), z + jitter(-0.2, 0.3)),
            down,
            Vec3::new(0.85, 0.18, 0.12),
        ),
        ToyLight::flat(
            LightShape::Rectangle { half_u: jitter(0.2, 0.32), half_v: jitter(0.14, 0.26) },
            Vec3::new(jitter(-0.6, 0.0), jitter(-0.4, 0.4), z + jitter(-0.2, 0.3)),
            down,
            Vec3::new(0.15, 0.8, 0.2),
        ),
        ToyLight::flat(
            LightShape::Ring { outer: jitter(0.26, 0.36), inner: jitter(0.12, 0.18) },
            Vec3::new(jitter(0.2, 0.8), jitter(-0.4, 0.4), z + jitter(-0.2, 0.3)),
            down,
            Vec3::new(0.15, 0.3, 0.85),
        ),
        ToyLight::flat(
            LightShape::Triangle {
                verts: [[0.0, 0.3], [-0.28, -0.2], [0.28, -0.2]],
            },
            Vec3::new(jitter(1.0, 1.6), jitter(-0.4, 0.4), z + jitter(-0.2, 0.3)),
            down,
            Vec3::new(0.8, 0.7, 0.15),
        ),
    ]
}

/// Probe positions 1..=n translating under the lights.
pub fn probe_track(count: usize) -> Vec<Vec3> {
    assert!(count >= 2);
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            Vec3::new(-1.3 + 2.6 * t, 0.0, 0.4)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn direct_hit_returns_radiance() {
        let light = ToyLight::flat(
            LightShape::Disc { radius: 0.3 },
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.9, 0.1, 0.1),
        );
        let from_below = toy_env_radiance(&[light], Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(from_below, Vec3::new(0.9, 0.1, 0.1));
        // Aim past the edge.
        let miss = toy_env_radiance(
            &[light],
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.4, 0.0, 1.0).normalized(),
        );
        assert_eq!(miss, Vec3::ZERO);
    }

    #[test]
    fn empty_ceiling_is_black() {
        let mut r = rng::stream(1, "toy-layout");
        let lights = toy_light_layout(&mut r);
        let v = toy_env_radiance(&lights, Vec3::new(0.0, 0.0, 0.4), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(v, Vec3::ZERO);
    }

    #[test]
    fn radiance_scales_linearly() {
        let mut r = rng::stream(2, "toy-layout");
        let mut lights = toy_light_layout(&mut r);
        let x = Vec3::new(-1.2, 0.0, 0.4);
        // Monte-Carlo sum over a direction fan doubles when the radiance
        // doubles.
        let fan: Vec<Vec3> = (0..500)
            .map(|i| {
                let a = i as f64 * 0.1;
                Vec3::new(a.cos() * 0.5, a.sin() * 0.5, 1.0).normalized()
            })
            .collect();
        let total = |lights: &[ToyLight]| -> Vec3 {
            fan.iter().fold(Vec3::ZERO, |acc, d| acc + toy_env_radiance(lights, x, *d))
        };
        let base = total(&lights);
        for l in lights.iter_mut() {
            l.radiance = l.radiance * 2.0;
        }
        let doubled = total(&lights);
        assert!((doubled - base * 2.0).norm() < 1e-9);
    }

    #[test]
    fn ring_has_a_hole() {
        let light = ToyLight::flat(
            LightShape::Ring { outer: 0.3, inner: 0.15 },
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::ONE,
        );
        let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 0.0);
        assert!(light.hit(&ray).is_none());
        let ray = Ray::new(Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), 0.0);
        assert!(light.hit(&ray).is_some());
    }

    #[test]
    fn triangle_containment() {
        let verts = [[0.0, 0.3], [-0.28, -0.2], [0.28, -0.2]];
        assert!(point_in_triangle(0.0, 0.0, &verts));
        assert!(!point_in_triangle(0.3, 0.3, &verts));
    }

    #[test]
    fn surface_points_lie_on_the_emitter() {
        let mut r = rng::stream(3, "toy-layout");
        for light in toy_light_layout(&mut r) {
            for p in light.surface_points(7) {
                // Project onto the plane and test containment via hit().
                let below = p - light.normal * 0.5;
                let ray = Ray::new(below, light.normal, 0.0);
                assert!(light.hit(&ray).is_some(), "{:?} point {p:?}", light.shape);
            }
        }
    }
}
