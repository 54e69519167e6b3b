//! Brute-force oracle for the closed-form ray projection.
//!
//! Scans the Gaussian value over a dense grid of march distances, extending
//! the range until the tail is negligible, then refines around the best
//! sample with a golden-section search. Deliberately shares no code with the
//! closed form: the Gaussian is evaluated pointwise through the matrix form
//! of the rotation.

use crate::geom::{Ray, Vec3};

use super::gaussian::GaussianParams;

/// G(x) with roughness-scaled sigma, evaluated through the rotation matrix.
pub fn gaussian_value(g: &GaussianParams, x: Vec3, rho: f64) -> f64 {
    let rot = g.rot.to_matrix();
    let psi_eff = g.inv_scale() / rho;
    let local = rot.mul_vec(x - g.mu).mul_elem(psi_eff);
    (-local.norm_sq()).exp()
}

/// Max of the Gaussian over t in [0, t_max] by dense sampling plus
/// golden-section refinement. `t_max` is extended adaptively until the value
/// at the end of the range falls below 1e-12 of the running max.
pub fn brute_force_project(
    g: &GaussianParams,
    ray: &Ray,
    rho: f64,
    t_max: f64,
    n_samples: usize,
) -> f64 {
    debug_assert!(n_samples >= 2);
    debug_assert!(rho > 0.0);
    let eval = |t: f64| gaussian_value(g, ray.point_at(t), rho);

    let mut t_end = t_max.max(1e-6);
    for _ in 0..64 {
        // The value along the ray is exp of a concave quadratic, so once the
        // tail at t_end is negligible relative to the max the scan range is
        // wide enough.
        let step = t_end / (n_samples - 1) as f64;
        let mut best_t = 0.0;
        let mut best_v = eval(0.0);
        for i in 1..n_samples {
            let t = i as f64 * step;
            let v = eval(t);
            if v > best_v {
                best_v = v;
                best_t = t;
            }
        }
        let tail = eval(t_end);
        if tail < 1e-12 * best_v || tail == 0.0 {
            // Golden-section refinement around the best sample.
            let lo = (best_t - step).max(0.0);
            let hi = best_t + step;
            return golden_section_max(eval, lo, hi).max(best_v);
        }
        t_end *= 2.0;
    }
    // Range extension failed to decay (pathological inputs); fall back to the
    // best of the last scan.
    let step = t_end / (n_samples - 1) as f64;
    (0..n_samples)
        .map(|i| eval(i as f64 * step))
        .fold(f64::MIN, f64::max)
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - (hi - lo) * INV_PHI;
    let mut x2 = lo + (hi - lo) * INV_PHI;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * INV_PHI;
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * INV_PHI;
            f2 = f(x2);
        }
    }
    f1.max(f2)
}
