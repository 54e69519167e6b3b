//! Coefficient fits of the probe's specular component under two encodings.
//!
//! Both encodings get the same linear-in-coefficients protocol: 25 basis
//! values per direction (degree-4 SH, or 25 Gaussians projected along the
//! ray) fitted per probe position by ridge-regularized least squares, the
//! exact solution of the optimization the reference procedure runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gde::{encode, Bbox, GaussianParams, GaussianSet};
use crate::geom::{sh_basis, ImageBuffer, Ray, Vec3};
use crate::rng;

use super::lights::ToyLight;
use super::preconv::preconvolve_oracle;

pub const TOY_COEFF_COUNT: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    Sh,
    Gde,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub encoding: EncodingKind,
    /// coeffs[position][channel][basis index].
    pub coeffs: Vec<[Vec<f64>; 3]>,
    pub mse_per_position: Vec<f64>,
    pub total_mse: f64,
    pub variation_score: f64,
}

/// Deterministic, near-uniform directions over the upper hemisphere.
pub fn fibonacci_hemisphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Places `count` Gaussians over the light surfaces: flattened along each
/// light's normal, tangent size scaled to the emitter extent.
///
/// The encoding multiplies every sigma by the query roughness, so the
/// stored scales are divided by `rho_ref` to give the intended world-space
/// footprint when evaluated at that roughness.
pub fn gaussians_from_lights(lights: &[ToyLight], count: usize, rho_ref: f64) -> GaussianSet {
    assert!(!lights.is_empty());
    debug_assert!(rho_ref > 0.0);
    let base = count / lights.len();
    let extra = count % lights.len();
    let mut gaussians = Vec::with_capacity(count);
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for (li, light) in lights.iter().enumerate() {
        let n_here = base + usize::from(li < extra);
        let points = light.surface_points(n_here);
        let sigma_t = (light.extent() * 0.6 / (n_here as f64).sqrt()).max(1e-3) / rho_ref;
        let sigma_n = (light.extent() * 0.15).max(1e-3) / rho_ref;
        let rot = light.frame_rotation();
        for p in points {
            lo = lo.min(p);
            hi = hi.max(p);
            gaussians.push(GaussianParams {
                mu: p,
                log_inv_scale: Vec3::new(-sigma_t.ln(), -sigma_t.ln(), -sigma_n.ln()),
                rot,
            });
        }
    }
    let bbox = Bbox::new(lo - Vec3::splat(0.5), hi + Vec3::splat(0.5));
    GaussianSet { gaussians, bbox }
}

/// Preconvolved targets on the direction grid for every probe position.
/// Each (position, direction) pair gets its own seed so evaluation order
/// does not matter.
pub fn fit_targets(
    lights: &[ToyLight],
    track: &[Vec3],
    dirs: &[Vec3],
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec3>>> {
    track
        .par_iter()
        .enumerate()
        .map(|(pi, pos)| {
            dirs.iter()
                .enumerate()
                .map(|(di, dir)| {
                    let s = rng::derive_seed(seed, &format!("toy-target-{pi}-{di}"));
                    preconvolve_oracle(lights, *pos, *dir, rho, n_mc, s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Basis row for one (position, direction) query.
pub fn basis_row(
    kind: EncodingKind,
    set: Option<&GaussianSet>,
    pos: Vec3,
    dir: Vec3,
    rho: f64,
) -> Vec<f64> {
    match kind {
        EncodingKind::Sh => sh_basis(dir, 4).expect("degree 4 is in range"),
        EncodingKind::Gde => {
            let set = set.expect("gde basis needs a gaussian set");
            encode(set, &Ray { origin: pos, direction: dir, base_radius: 0.0 }, rho).values
        }
    }
}

/// Per-position least-squares coefficients for one encoding.
pub fn fit_coefficients(
    kind: EncodingKind,
    set: Option<&GaussianSet>,
    track: &[Vec3],
    dirs: &[Vec3],
    targets: &[Vec<Vec3>],
    rho: f64,
    ridge: f64,
) -> Result<FitReport> {
    if track.is_empty() || dirs.is_empty() || targets.len() != track.len() {
        return Err(Error::shape("fit: track/target shapes disagree"));
    }
    let degenerate = targets
        .iter()
        .all(|rows| rows.iter().all(|v| v.norm() == 0.0));
    if degenerate {
        return Err(Error::invalid("fit: all targets are zero"));
    }
    if kind == EncodingKind::Gde {
        let set = set.ok_or_else(|| Error::invalid("gde fit needs a gaussian set"))?;
        if set.len() != TOY_COEFF_COUNT {
            return Err(Error::invalid(format!(
                "gde fit expects {TOY_COEFF_COUNT} gaussians, got {}",
                set.len()
            )));
        }
    }

    let k = TOY_COEFF_COUNT;
    let mut coeffs = Vec::with_capacity(track.len());
    let mut mse_per_position = Vec::with_capacity(track.len());
    for (pi, pos) in track.iter().enumerate() {
        // Normal equations over the direction grid.
        let rows: Vec<Vec<f64>> = dirs
            .iter()
            .map(|d| basis_row(kind, set, *pos, *d, rho))
            .collect();
        let mut gram = vec![0.0; k * k];
        let mut rhs = [vec![0.0; k], vec![0.0; k], vec![0.0; k]];
        for (row, target) in rows.iter().zip(targets[pi].iter()) {
            for a in 0..k {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..k {
                    gram[a * k + b] += ra * row[b];
                }
                rhs[0][a] += ra * target.x;
                rhs[1][a] += ra * target.y;
                rhs[2][a] += ra * target.z;
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[a * k + b] = gram[b * k + a];
            }
            gram[a * k + a] += ridge;
        }
        let chol = cholesky(&gram, k)
            .ok_or_else(|| Error::invalid("fit: singular normal equations"))?;
        let solved = [
            chol_solve(&chol, k, &rhs[0]),
            chol_solve(&chol, k, &rhs[1]),
            chol_solve(&chol, k, &rhs[2]),
        ];
        // Residual MSE over directions and channels.
        let mut se = 0.0;
        for (row, target) in rows.iter().zip(targets[pi].iter()) {
            let pred = Vec3::new(
                dot(row, &solved[0]),
                dot(row, &solved[1]),
                dot(row, &solved[2]),
            );
            se += (pred - *target).norm_sq();
        }
        mse_per_position.push(se / (dirs.len() * 3) as f64);
        coeffs.push(solved);
    }

    let total_mse = mse_per_position.iter().sum::<f64>() / mse_per_position.len() as f64;
    let variation_score = variation_score(&coeffs);
    Ok(FitReport { encoding: kind, coeffs, mse_per_position, total_mse, variation_score })
}

/// Mean over (coefficient index, channel) of std across positions divided
/// by |mean across positions| + 1e-6.
pub fn variation_score(coeffs: &[[Vec<f64>; 3]]) -> f64 {
    let positions = coeffs.len() as f64;
    let k = coeffs[0][0].len();
    let mut acc = 0.0;
    for c in 0..3 {
        for i in 0..k {
            let vals: Vec<f64> = coeffs.iter().map(|p| p[c][i]).collect();
            let mean = vals.iter().sum::<f64>() / positions;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / positions;
            acc += var.sqrt() / (mean.abs() + 1e-6);
        }
    }
    acc / (3 * k) as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense Cholesky factor (lower triangular) of a symmetric positive
/// definite matrix, or None if it is not SPD.
fn cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for p in 0..j {
                sum -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * n + p] * y[p];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in (i + 1)..n {
            s -= l[p * n + i] * x[p];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Renders basis . coeffs over the stereographic plane. Pixels outside the
/// unit circle (lower hemisphere) are invalid.
pub fn render_stereographic(
    kind: EncodingKind,
    set: Option<&GaussianSet>,
    coeffs: &[Vec<f64>; 3],
    x: Vec3,
    rho: f64,
    resolution: usize,
) -> Result<ImageBuffer> {
    if resolution < 8 {
        return Err(Error::invalid("stereographic render needs resolution >= 8"));
    }
    let mut img = ImageBuffer::new(resolution, resolution, 3);
    let half = resolution as f64 / 2.0;
    for py in 0..resolution {
        for px in 0..resolution {
            let s = (px as f64 + 0.5 - half) / half * 1.02;
            let t = (py as f64 + 0.5 - half) / half * 1.02;
            if s * s + t * t > 1.0 {
                img.set_valid(px, py, false);
                continue;
            }
            let dir = crate::geom::stereographic_unproject(s, t);
            let row = basis_row(kind, set, x, dir, rho);
            img.set_pixel_vec3(
                px,
                py,
                Vec3::new(dot(&row, &coeffs[0]), dot(&row, &coeffs[1]), dot(&row, &coeffs[2])),
            );
        }
    }
    Ok(img)
}
