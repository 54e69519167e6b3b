//! Monte-Carlo preconvolution of the toy environment.
//!
//! The preconvolved radiance at (x, dir, rho) averages the environment over
//! a von Mises-Fisher lobe around dir with concentration kappa = 1 / rho^2,
//! the single-parameter roughness family used throughout.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec3;

use super::lights::{toy_env_radiance, ToyLight};

/// Draws a unit vector from the vMF distribution around `axis`.
///
/// Uses the inverse-CDF form w = 1 + ln(u + (1-u) e^{-2 kappa}) / kappa,
/// which stays stable for large concentrations.
pub fn sample_vmf(axis: Vec3, kappa: f64, rng: &mut impl Rng) -> Vec3 {
    debug_assert!(kappa > 0.0);
    let u: f64 = rng.gen_range(1e-300..1.0);
    let w = if kappa > 700.0 {
        // e^{-2k} underflows; ln(u)/k is exact in that regime.
        1.0 + u.ln() / kappa
    } else {
        1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa
    };
    let w = w.clamp(-1.0, 1.0);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - w * w).max(0.0).sqrt();
    let (e1, e2) = axis.tangent_frame();
    axis * w + e1 * (r * phi.cos()) + e2 * (r * phi.sin())
}

/// Monte-Carlo estimate of the preconvolved radiance; deterministic for a
/// fixed seed.
pub fn preconvolve_oracle(
    lights: &[ToyLight],
    x: Vec3,
    dir: Vec3,
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Vec3> {
    if rho <= 0.0 {
        return Err(Error::invalid("preconvolve: rho must be positive"));
    }
    let kappa = 1.0 / (rho * rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Vec3::ZERO;
    for _ in 0..n_mc {
        let d = sample_vmf(dir, kappa, &mut rng);
        acc += toy_env_radiance(lights, x, d);
    }
    Ok(acc / n_mc as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::toy::lights::toy_light_layout;

    #[test]
    fn vmf_concentrates_around_axis() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalized();
        let mut r = rng::stream(0, "vmf");
        let mut min_dot: f64 = 1.0;
        for _ in 0..1000 {
            let d = sample_vmf(axis, 1e6, &mut r);
            assert!((d.norm() - 1.0).abs() < 1e-9);
            min_dot = min_dot.min(d.dot(axis));
        }
        assert!(min_dot > 0.999, "min dot {min_dot}");
    }

    #[test]
    fn delta_lobe_limit_matches_unconvolved() {
        let mut r = rng::stream(1, "toy-layout");
        let lights = toy_light_layout(&mut r);
        let x = Vec3::new(0.0, 0.0, 0.4);
        // Aim at the middle of the rectangle light.
        let target = lights[1].center;
        let dir = (target - x).normalized();
        let sharp = preconvolve_oracle(&lights, x, dir, 1e-3, 20_000, 7).unwrap();
        let exact = toy_env_radiance(&lights, x, dir);
        assert!((sharp - exact).norm() < 0.02, "sharp {sharp:?} vs exact {exact:?}");
    }

    #[test]
    fn isotropic_limit_loses_direction() {
        let mut r = rng::stream(2, "toy-layout");
        let lights = toy_light_layout(&mut r);
        let x = Vec3::new(0.0, 0.0, 0.4);
        let n = 40_000;
        let a = preconvolve_oracle(&lights, x, Vec3::new(0.0, 0.0, 1.0), 100.0, n, 3).unwrap();
        let b = preconvolve_oracle(
            &lights,
            x,
            Vec3::new(1.0, 0.0, 0.0),
            100.0,
            n,
            4,
        )
        .unwrap();
        // Means agree within 3 MC standard errors; radiance values are
        // bounded by ~0.85 so sigma/sample < 0.5.
        let se = 3.0 * 0.5 / (n as f64).sqrt();
        for (ca, cb) in [(a.x, b.x), (a.y, b.y), (a.z, b.z)] {
            assert!((ca - cb).abs() < 3.0 * se, "{ca} vs {cb}");
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let mut r = rng::stream(3, "toy-layout");
        let lights = toy_light_layout(&mut r);
        let x = Vec3::new(0.2, -0.1, 0.4);
        let dir = Vec3::new(0.1, 0.2, 0.95).normalized();
        let a = preconvolve_oracle(&lights, x, dir, 0.1, 5_000, 42).unwrap();
        let b = preconvolve_oracle(&lights, x, dir, 0.1, 5_000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rho_zero_rejected() {
        assert!(preconvolve_oracle(&[], Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 0.0, 100, 0).is_err());
    }

    #[test]
    fn smoothing_is_monotone_toward_the_mean() {
        // Single light: increasing rho moves the lobe average toward the
        // hemisphere mean.
        let light = ToyLight::flat(
            super::super::lights::LightShape::Disc { radius: 0.3 },
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(1.0, 0.0, 0.0),
        );
        let lights = [light];
        let x = Vec3::ZERO;
        let dir = Vec3::new(0.0, 0.0, 1.0);
        // Uniform-hemisphere mean via a huge lobe.
        let mean = preconvolve_oracle(&lights, x, dir, 50.0, 60_000, 9).unwrap();
        let mut prev_dist = f64::INFINITY;
        for rho in [0.05, 0.15, 0.45, 1.4] {
            let v = preconvolve_oracle(&lights, x, dir, rho, 60_000, 10).unwrap();
            let dist = (v - mean).norm();
            assert!(
                dist < prev_dist + 0.01,
                "rho {rho}: dist {dist} prev {prev_dist}"
            );
            prev_dist = dist;
        }
    }
}
