//! Analytic gradients of the Gaussian directional encoding.
//!
//! The closed form is differentiated per branch. At the branch boundary
//! (o_loc . d_loc = 0) the derivative of the "otherwise" branch is used
//! one-sided; the boundary is a measure-zero set and the finite-difference
//! suite excludes a small neighborhood around it.

use crate::geom::quat::{normalize_jacobian_apply, quat_rotate, quat_rotate_grad_q};
use crate::geom::{Ray, Vec3};

use super::encoding::RHO_MIN;
use super::gaussian::{GaussianParams, GaussianSet};

/// Gradient of a scalar loss with respect to one Gaussian's parameters.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianGrad {
    pub d_mu: Vec3,
    pub d_log_inv_scale: Vec3,
    /// Gradient w.r.t. the raw (w, x, y, z) quaternion components; already
    /// tangent to the unit sphere through the normalization Jacobian.
    pub d_rot: [f64; 4],
}

impl GaussianGrad {
    pub fn scaled(&self, s: f64) -> GaussianGrad {
        GaussianGrad {
            d_mu: self.d_mu * s,
            d_log_inv_scale: self.d_log_inv_scale * s,
            d_rot: [
                self.d_rot[0] * s,
                self.d_rot[1] * s,
                self.d_rot[2] * s,
                self.d_rot[3] * s,
            ],
        }
    }

    pub fn accumulate(&mut self, other: &GaussianGrad) {
        self.d_mu += other.d_mu;
        self.d_log_inv_scale += other.d_log_inv_scale;
        for i in 0..4 {
            self.d_rot[i] += other.d_rot[i];
        }
    }

    pub fn add_to_flat(&self, out: &mut [f64]) {
        out[0] += self.d_mu.x;
        out[1] += self.d_mu.y;
        out[2] += self.d_mu.z;
        out[3] += self.d_log_inv_scale.x;
        out[4] += self.d_log_inv_scale.y;
        out[5] += self.d_log_inv_scale.z;
        for i in 0..4 {
            out[6 + i] += self.d_rot[i];
        }
    }
}

/// Gradients of `sum_i upstream_i * P_i` for a whole set.
#[derive(Clone, Debug)]
pub struct EncodingGrads {
    pub per_gaussian: Vec<GaussianGrad>,
    pub d_origin: Vec3,
    pub d_direction: Vec3,
    pub d_rho: f64,
}

/// Value and full gradient of one Gaussian's projection.
pub fn project_max_grad(
    g: &GaussianParams,
    ray: &Ray,
    rho: f64,
) -> (f64, GaussianGrad, Vec3, Vec3, f64) {
    let q_unit = g.rot.normalized();
    let psi_eff = g.inv_scale() / rho;
    let u = ray.origin - g.mu;
    let ru = quat_rotate(q_unit, u);
    let rd = quat_rotate(q_unit, ray.direction);
    let a = ru.mul_elem(psi_eff);
    let b = rd.mul_elem(psi_eff);

    let aa = a.dot(a);
    let ab = a.dot(b);
    let bb = b.dot(b);

    let (value, g_a, g_b) = if ab < 0.0 {
        let value = (ab * ab / bb - aa).exp();
        let d_ab = value * 2.0 * ab / bb;
        let d_bb = -value * ab * ab / (bb * bb);
        let g_a = a * (-2.0 * value) + b * d_ab;
        let g_b = a * d_ab + b * (2.0 * d_bb);
        (value, g_a, g_b)
    } else {
        let value = (-aa).exp();
        (value, a * (-2.0 * value), Vec3::ZERO)
    };

    // Back through the elementwise scale: gradients w.r.t. the rotated
    // vectors and w.r.t. log psi / rho.
    let h_a = g_a.mul_elem(psi_eff);
    let h_b = g_b.mul_elem(psi_eff);
    let d_log_psi = g_a.mul_elem(a) + g_b.mul_elem(b);
    let d_rho = -(d_log_psi.x + d_log_psi.y + d_log_psi.z) / rho;

    // Back through the rotation: R^T h via the conjugate rotation.
    let q_conj = crate::geom::Quaternion::new(q_unit.w, -q_unit.x, -q_unit.y, -q_unit.z);
    let d_origin = quat_rotate(q_conj, h_a);
    let d_mu = -d_origin;
    let d_direction = quat_rotate(q_conj, h_b);

    let mut d_rot_unit = quat_rotate_grad_q(q_unit, u, h_a);
    let d_rot_dir = quat_rotate_grad_q(q_unit, ray.direction, h_b);
    for i in 0..4 {
        d_rot_unit[i] += d_rot_dir[i];
    }
    let d_rot = normalize_jacobian_apply(g.rot, d_rot_unit);

    (
        value,
        GaussianGrad { d_mu, d_log_inv_scale: d_log_psi, d_rot },
        d_origin,
        d_direction,
        d_rho,
    )
}

/// Gradients of the encoding contracted with `upstream` (one weight per
/// Gaussian). Applies the same roughness floor as `encode`; below the floor
/// the derivative w.r.t. rho is zero.
pub fn encode_grad(set: &GaussianSet, ray: &Ray, rho: f64, upstream: &[f64]) -> EncodingGrads {
    debug_assert_eq!(upstream.len(), set.len());
    let clamped = rho < RHO_MIN;
    let rho_eff = rho.max(RHO_MIN);
    let mut per_gaussian = Vec::with_capacity(set.len());
    let mut d_origin = Vec3::ZERO;
    let mut d_direction = Vec3::ZERO;
    let mut d_rho = 0.0;
    for (g, &u) in set.gaussians.iter().zip(upstream.iter()) {
        let (_, gg, d_o, d_d, d_r) = project_max_grad(g, ray, rho_eff);
        per_gaussian.push(gg.scaled(u));
        d_origin += d_o * u;
        d_direction += d_d * u;
        d_rho += d_r * u;
    }
    if clamped {
        d_rho = 0.0;
    }
    EncodingGrads { per_gaussian, d_origin, d_direction, d_rho }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gde::encoding::project_max;
    use crate::gde::gaussian::Bbox;
    use crate::geom::Quaternion;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut ChaCha8Rng) -> (GaussianParams, Ray, f64) {
        let g = GaussianParams {
            mu: Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
            log_inv_scale: Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
            rot: Quaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
        };
        if g.rot.norm() < 0.3 {
            return random_config(rng);
        }
        let o = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let d = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if d.norm() < 0.1 {
            return random_config(rng);
        }
        let ray = Ray::new(o, d.normalized(), 0.01);
        let rho = rng.gen_range(0.05..2.0);
        (g, ray, rho)
    }

    /// Central finite differences of project_max w.r.t. every input scalar.
    fn check_config(g: &GaussianParams, ray: &Ray, rho: f64, tol: f64) {
        let (o_loc, d_loc) = crate::gde::encoding::to_local_rho(g, ray, rho);
        if o_loc.dot(d_loc).abs() < 1e-6 {
            return; // branch boundary excluded
        }
        let (value, gg, d_o, d_d, d_rho) = project_max_grad(g, ray, rho);
        assert!((value - project_max(g, ray, rho).unwrap()).abs() < 1e-14);

        let h = 1e-5;
        let rel = |fd: f64, an: f64| {
            let denom = fd.abs().max(an.abs()).max(1e-8);
            (fd - an).abs() / denom
        };
        let eval = |g: &GaussianParams, ray: &Ray, rho: f64| project_max(g, ray, rho).unwrap();

        // mu, log_inv_scale
        for axis in 0..3 {
            let mut gp = *g;
            let mut gm = *g;
            match axis {
                0 => {
                    gp.mu.x += h;
                    gm.mu.x -= h;
                }
                1 => {
                    gp.mu.y += h;
                    gm.mu.y -= h;
                }
                _ => {
                    gp.mu.z += h;
                    gm.mu.z -= h;
                }
            }
            let fd = (eval(&gp, ray, rho) - eval(&gm, ray, rho)) / (2.0 * h);
            let an = [gg.d_mu.x, gg.d_mu.y, gg.d_mu.z][axis];
            assert!(rel(fd, an) < tol, "mu[{axis}] fd {fd} vs {an}");

            let mut gp = *g;
            let mut gm = *g;
            match axis {
                0 => {
                    gp.log_inv_scale.x += h;
                    gm.log_inv_scale.x -= h;
                }
                1 => {
                    gp.log_inv_scale.y += h;
                    gm.log_inv_scale.y -= h;
                }
                _ => {
                    gp.log_inv_scale.z += h;
                    gm.log_inv_scale.z -= h;
                }
            }
            let fd = (eval(&gp, ray, rho) - eval(&gm, ray, rho)) / (2.0 * h);
            let an = [
                gg.d_log_inv_scale.x,
                gg.d_log_inv_scale.y,
                gg.d_log_inv_scale.z,
            ][axis];
            assert!(rel(fd, an) < tol, "log_psi[{axis}] fd {fd} vs {an}");
        }

        // quaternion (raw components)
        for i in 0..4 {
            let mut arr_p = g.rot.to_array();
            let mut arr_m = arr_p;
            arr_p[i] += h;
            arr_m[i] -= h;
            let mut gp = *g;
            gp.rot = Quaternion::from_array(arr_p);
            let mut gm = *g;
            gm.rot = Quaternion::from_array(arr_m);
            let fd = (eval(&gp, ray, rho) - eval(&gm, ray, rho)) / (2.0 * h);
            assert!(rel(fd, gg.d_rot[i]) < tol, "quat[{i}] fd {fd} vs {}", gg.d_rot[i]);
        }

        // ray origin / direction
        for axis in 0..3 {
            let mut op = ray.origin.to_array();
            let mut om = op;
            op[axis] += h;
            om[axis] -= h;
            let rp = Ray { origin: Vec3::from_array(op), ..*ray };
            let rm = Ray { origin: Vec3::from_array(om), ..*ray };
            let fd = (eval(g, &rp, rho) - eval(g, &rm, rho)) / (2.0 * h);
            let an = d_o.to_array()[axis];
            assert!(rel(fd, an) < tol, "origin[{axis}] fd {fd} vs {an}");

            let mut dp = ray.direction.to_array();
            let mut dm = dp;
            dp[axis] += h;
            dm[axis] -= h;
            let rp = Ray { direction: Vec3::from_array(dp), ..*ray };
            let rm = Ray { direction: Vec3::from_array(dm), ..*ray };
            let fd = (eval(g, &rp, rho) - eval(g, &rm, rho)) / (2.0 * h);
            let an = d_d.to_array()[axis];
            assert!(rel(fd, an) < tol, "direction[{axis}] fd {fd} vs {an}");
        }

        // rho
        let fd = (eval(g, ray, rho + h) - eval(g, ray, rho - h)) / (2.0 * h);
        assert!(rel(fd, d_rho) < tol, "rho fd {fd} vs {d_rho}");
    }

    #[test]
    fn finite_differences_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
        for _ in 0..60 {
            let (g, ray, rho) = random_config(&mut rng);
            check_config(&g, &ray, rho, 1e-4);
        }
    }

    #[test]
    fn center_ray_has_symmetric_mu_gradient() {
        // Ray through the Gaussian center: the peak value 1 is stationary in
        // the perpendicular plane.
        let g = GaussianParams::isotropic(Vec3::ZERO, 1.0);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0), 0.01);
        let (value, gg, _, _, _) = project_max_grad(&g, &ray, 1.0);
        assert!((value - 1.0).abs() < 1e-12);
        assert!(gg.d_mu.x.abs() < 1e-12);
        assert!(gg.d_mu.y.abs() < 1e-12);
    }

    #[test]
    fn receding_branch_rho_gradient_is_positive() {
        // Boundary-branch value exp(-|psi (o - mu)|^2 / rho^2) grows with rho.
        let g = GaussianParams::isotropic(Vec3::ZERO, 1.0);
        let ray = Ray::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.01);
        let (_, _, _, _, d_rho) = project_max_grad(&g, &ray, 0.8);
        assert!(d_rho > 0.0);
    }

    #[test]
    fn encode_grad_scales_with_upstream() {
        let bbox = Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = GaussianSet::init_in_bbox(3, bbox, &mut rng);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.1, 0.0, 1.0).normalized(), 0.01);
        let g1 = encode_grad(&set, &ray, 0.5, &[1.0, 0.0, 0.0]);
        let g2 = encode_grad(&set, &ray, 0.5, &[2.0, 0.0, 0.0]);
        assert!((g2.per_gaussian[0].d_mu - g1.per_gaussian[0].d_mu * 2.0).norm() < 1e-12);
        assert!(g1.per_gaussian[1].d_mu.norm() == 0.0);
        assert!((g2.d_origin - g1.d_origin * 2.0).norm() < 1e-12);
    }

    #[test]
    fn rho_floor_zeroes_rho_gradient() {
        let bbox = Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set = GaussianSet::init_in_bbox(2, bbox, &mut rng);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 1.0), 0.01);
        let g = encode_grad(&set, &ray, 1e-5, &[1.0, 1.0]);
        assert_eq!(g.d_rho, 0.0);
    }
}

/// Summary of a finite-difference sweep over random configurations.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GradCheckReport {
    pub configs: usize,
    pub skipped_boundary: usize,
    /// Max relative error per parameter group.
    pub max_rel_mu: f64,
    pub max_rel_log_scale: f64,
    pub max_rel_rot: f64,
    pub max_rel_origin: f64,
    pub max_rel_direction: f64,
    pub max_rel_rho: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_overall(&self) -> f64 {
        self.max_rel_mu
            .max(self.max_rel_log_scale)
            .max(self.max_rel_rot)
            .max(self.max_rel_origin)
            .max(self.max_rel_direction)
            .max(self.max_rel_rho)
    }
}

/// Central finite differences against [`project_max_grad`] over `n` seeded
/// random configurations, excluding a small band around the branch
/// boundary. `grad_fn` is injectable so the checker's sensitivity can be
/// verified with a deliberately broken gradient.
pub fn finite_difference_report_with(
    n: usize,
    seed: u64,
    tolerance: f64,
    grad_fn: &dyn Fn(&GaussianParams, &Ray, f64) -> (f64, GaussianGrad, Vec3, Vec3, f64),
) -> GradCheckReport {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, "gde-fd-check");
    let mut report = GradCheckReport {
        configs: 0,
        skipped_boundary: 0,
        max_rel_mu: 0.0,
        max_rel_log_scale: 0.0,
        max_rel_rot: 0.0,
        max_rel_origin: 0.0,
        max_rel_direction: 0.0,
        max_rel_rho: 0.0,
        tolerance,
        passed: true,
    };
    let h = 1e-4;
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
    while report.configs < n {
        let g = GaussianParams {
            mu: Vec3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            ),
            log_inv_scale: Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
            rot: crate::geom::Quaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
        };
        if g.rot.norm() < 0.3 {
            continue;
        }
        let dvec = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if dvec.norm() < 0.1 {
            continue;
        }
        let ray = Ray::new(
            Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            dvec.normalized(),
            0.01,
        );
        let rho = rng.gen_range(0.05..2.0);
        let (o_loc, d_loc) = super::encoding::to_local_rho(&g, &ray, rho);
        if o_loc.dot(d_loc).abs() < 1e-6 {
            report.skipped_boundary += 1;
            continue;
        }
        report.configs += 1;
        let (_, gg, d_o, d_d, d_rho) = grad_fn(&g, &ray, rho);
        let eval = |g: &GaussianParams, ray: &Ray, rho: f64| {
            super::encoding::project_max(g, ray, rho).expect("positive rho")
        };

        let mut flat = [0.0; 10];
        g.to_flat(&mut flat);
        // mu (0..3), log scale (3..6), quaternion (6..10)
        for i in 0..10 {
            let mut fp = flat;
            fp[i] += h;
            let mut fm = flat;
            fm[i] -= h;
            let fd = (eval(&GaussianParams::from_flat(&fp), &ray, rho)
                - eval(&GaussianParams::from_flat(&fm), &ray, rho))
                / (2.0 * h);
            let mut an = [0.0; 10];
            gg.add_to_flat(&mut an);
            let r = rel(fd, an[i]);
            let slot = match i {
                0..=2 => &mut report.max_rel_mu,
                3..=5 => &mut report.max_rel_log_scale,
                _ => &mut report.max_rel_rot,
            };
            *slot = slot.max(r);
        }
        for axis in 0..3 {
            let mut op = ray.origin.to_array();
            let mut om = op;
            op[axis] += h;
            om[axis] -= h;
            let fd = (eval(&g, &Ray { origin: Vec3::from_array(op), ..ray }, rho)
                - eval(&g, &Ray { origin: Vec3::from_array(om), ..ray }, rho))
                / (2.0 * h);
            report.max_rel_origin = report.max_rel_origin.max(rel(fd, d_o.to_array()[axis]));

            let mut dp = ray.direction.to_array();
            let mut dm = dp;
            dp[axis] += h;
            dm[axis] -= h;
            let fd = (eval(&g, &Ray { direction: Vec3::from_array(dp), ..ray }, rho)
                - eval(&g, &Ray { direction: Vec3::from_array(dm), ..ray }, rho))
                / (2.0 * h);
            report.max_rel_direction =
                report.max_rel_direction.max(rel(fd, d_d.to_array()[axis]));
        }
        let fd = (eval(&g, &ray, rho + h) - eval(&g, &ray, rho - h)) / (2.0 * h);
        report.max_rel_rho = report.max_rel_rho.max(rel(fd, d_rho));
    }
    report.passed = report.max_overall() <= tolerance;
    report
}

/// Finite-difference sweep against the production gradients.
pub fn finite_difference_report(n: usize, seed: u64, tolerance: f64) -> GradCheckReport {
    finite_difference_report_with(n, seed, tolerance, &project_max_grad)
}
