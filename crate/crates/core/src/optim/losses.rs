//! Loss terms for the initialization and joint training stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Camera, ImageBuffer, Vec3};

/// Density-gradient magnitudes below this are skipped by the normal
/// prediction loss; normalizing a near-zero vector is meaningless.
pub const G_EPS: f64 = 1e-6;

/// Loss weights and the early-stop iteration of the monocular term.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dist: f64,
    pub lambda_mono: f64,
    pub lambda_norm: f64,
    /// The monocular normal loss is active for iterations < mono_stop_iter.
    pub mono_stop_iter: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dist: 0.002,
            lambda_mono: 1.0,
            lambda_norm: 1e-3,
            mono_stop_iter: 4_000,
        }
    }
}

impl LossWeights {
    pub fn mono_weight(&self, iter: u64) -> f64 {
        if iter < self.mono_stop_iter {
            self.lambda_mono
        } else {
            0.0
        }
    }
}

/// Individual loss values prior to weighting.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    pub l_color: f64,
    pub l_dist: f64,
    pub l_mono: f64,
    pub l_norm: f64,
}

/// Weighted total with the early-stopped monocular term.
pub fn combined_loss(parts: &LossParts, iter: u64, weights: &LossWeights) -> f64 {
    parts.l_color
        + weights.lambda_dist * parts.l_dist
        + weights.mono_weight(iter) * parts.l_mono
        + weights.lambda_norm * parts.l_norm
}

/// Mean absolute error over jointly valid pixels (all channels).
pub fn loss_l1_color(pred: &ImageBuffer, target: &ImageBuffer) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::shape("l1: image shapes differ"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in pred.jointly_valid(target) {
        for c in 0..pred.channels {
            sum += (pred.get(x, y, c) - target.get(x, y, c)).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("l1: no valid pixels"));
    }
    Ok(sum / n as f64)
}

/// Mean of |n - R n_mono|^2 over rays; `mono` normals are view-space and get
/// rotated into world space by the camera.
pub fn loss_mono_normal(pred_world: &[Vec3], mono_view: &[Vec3], cam: &Camera) -> Result<f64> {
    if pred_world.len() != mono_view.len() {
        return Err(Error::shape("mono loss: normal counts differ"));
    }
    if pred_world.is_empty() {
        return Err(Error::invalid("mono loss: empty input"));
    }
    let sum: f64 = pred_world
        .iter()
        .zip(mono_view.iter())
        .map(|(n, m)| (*n - cam.normal_to_world(*m)).norm_sq())
        .sum();
    Ok(sum / pred_world.len() as f64)
}

/// Mean of |n' + g/|g||^2 over samples with a usable density gradient.
/// Returns 0 when every gradient is below [`G_EPS`].
pub fn loss_normal_pred(pred: &[Vec3], density_grad: &[Vec3]) -> Result<f64> {
    if pred.len() != density_grad.len() {
        return Err(Error::shape("normal pred loss: sample counts differ"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in pred.iter().zip(density_grad.iter()) {
        let mag = g.norm();
        if mag <= G_EPS {
            continue;
        }
        let target = -*g / mag;
        sum += (*p - target).norm_sq();
        n += 1;
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum / n as f64)
}

/// Distortion loss over one ray's blending weights.
///
/// `s` are normalized sample midpoints in [0, 1], `ds` the normalized
/// interval lengths: sum_ij w_i w_j |s_i - s_j| + (1/3) sum_i w_i^2 ds_i.
pub fn loss_distortion(weights: &[f64], s: &[f64], ds: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), s.len());
    debug_assert_eq!(weights.len(), ds.len());
    let mut pair = 0.0;
    for i in 0..weights.len() {
        for j in 0..weights.len() {
            pair += weights[i] * weights[j] * (s[i] - s[j]).abs();
        }
    }
    let self_term: f64 = weights
        .iter()
        .zip(ds.iter())
        .map(|(w, d)| w * w * d)
        .sum::<f64>()
        / 3.0;
    pair + self_term
}

/// Gradient of [`loss_distortion`] w.r.t. the weights.
pub fn loss_distortion_grad(weights: &[f64], s: &[f64], ds: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), weights.len());
    for k in 0..weights.len() {
        let mut acc = 0.0;
        for j in 0..weights.len() {
            acc += weights[j] * (s[k] - s[j]).abs();
        }
        out[k] = 2.0 * acc + 2.0 / 3.0 * weights[k] * ds[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;

    fn cam() -> Camera {
        Camera::new(10.0, 10.0, 2.0, 2.0, Mat3::IDENTITY, Vec3::ZERO, 4, 4).unwrap()
    }

    #[test]
    fn l1_known_values() {
        let mut a = ImageBuffer::new(3, 3, 3);
        a.data.fill(0.5);
        assert_eq!(loss_l1_color(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v += 0.2;
        }
        assert!((loss_l1_color(&a, &b).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn l1_matches_naive_loop() {
        let mut a = ImageBuffer::new(4, 2, 3);
        let mut b = ImageBuffer::new(4, 2, 3);
        let mut state = 77u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..a.data.len() {
            a.data[i] = next();
            b.data[i] = next();
        }
        let mut sum = 0.0;
        for i in 0..a.data.len() {
            sum += (a.data[i] - b.data[i]).abs();
        }
        assert!((loss_l1_color(&a, &b).unwrap() - sum / a.data.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn mono_loss_zero_and_antipodal() {
        let cam = cam();
        let mono = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)];
        let pred: Vec<Vec3> = mono.iter().map(|m| cam.normal_to_world(*m)).collect();
        assert!(loss_mono_normal(&pred, &mono, &cam).unwrap() < 1e-15);
        let flipped: Vec<Vec3> = pred.iter().map(|p| -*p).collect();
        assert!((loss_mono_normal(&flipped, &mono, &cam).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn normal_pred_loss_cases() {
        let g = vec![Vec3::new(0.0, 0.0, -2.0)];
        // Prediction equal to -g/|g| => zero.
        let pred = vec![Vec3::new(0.0, 0.0, 1.0)];
        assert!(loss_normal_pred(&pred, &g).unwrap() < 1e-15);
        // Orthogonal unit pair => |a - b|^2 = 2.
        let pred = vec![Vec3::new(1.0, 0.0, 0.0)];
        assert!((loss_normal_pred(&pred, &g).unwrap() - 2.0).abs() < 1e-12);
        // Tiny gradients are skipped.
        let g = vec![Vec3::new(0.0, 0.0, 1e-9)];
        assert_eq!(loss_normal_pred(&pred, &g).unwrap(), 0.0);
    }

    #[test]
    fn normal_pred_loss_matches_loop() {
        let mut state = 5u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let pred: Vec<Vec3> = (0..20)
            .map(|_| Vec3::new(next(), next(), next()).normalized())
            .collect();
        let grads: Vec<Vec3> = (0..20).map(|_| Vec3::new(next(), next(), next())).collect();
        let mut sum = 0.0;
        let mut n = 0;
        for (p, g) in pred.iter().zip(grads.iter()) {
            if g.norm() > G_EPS {
                let t = -*g / g.norm();
                sum += (*p - t).norm_sq();
                n += 1;
            }
        }
        assert!((loss_normal_pred(&pred, &grads).unwrap() - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn distortion_known_cases() {
        assert_eq!(loss_distortion(&[0.0, 0.0], &[0.2, 0.8], &[0.1, 0.1]), 0.0);
        // Single spike: w^2 d / 3.
        let v = loss_distortion(&[0.5], &[0.4], &[0.2]);
        assert!((v - 0.25 * 0.2 / 3.0).abs() < 1e-15);
        // Two spikes, hand-expanded double sum:
        // 2 w1 w2 |s1 - s2| + (w1^2 d1 + w2^2 d2) / 3.
        let (w1, w2, s1, s2, d1, d2) = (0.3f64, 0.6f64, 0.2f64, 0.7f64, 0.1f64, 0.05f64);
        let expect = 2.0 * w1 * w2 * (s1 - s2).abs() + (w1 * w1 * d1 + w2 * w2 * d2) / 3.0;
        assert!((loss_distortion(&[w1, w2], &[s1, s2], &[d1, d2]) - expect).abs() < 1e-15);
    }

    #[test]
    fn distortion_grad_matches_fd() {
        let w = [0.2, 0.5, 0.1, 0.0];
        let s = [0.1, 0.35, 0.6, 0.9];
        let ds = [0.25, 0.25, 0.25, 0.25];
        let mut grad = [0.0; 4];
        loss_distortion_grad(&w, &s, &ds, &mut grad);
        let h = 1e-7;
        for k in 0..4 {
            let mut wp = w;
            wp[k] += h;
            let mut wm = w;
            wm[k] -= h;
            let fd = (loss_distortion(&wp, &s, &ds) - loss_distortion(&wm, &s, &ds)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6, "k={k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn combined_loss_schedule() {
        let weights = LossWeights { mono_stop_iter: 100, ..Default::default() };
        let parts = LossParts { l_color: 1.0, l_dist: 2.0, l_mono: 3.0, l_norm: 4.0 };
        let early = combined_loss(&parts, 0, &weights);
        let late = combined_loss(&parts, 100, &weights);
        assert!((early - (1.0 + 0.002 * 2.0 + 3.0 + 1e-3 * 4.0)).abs() < 1e-12);
        assert!((late - (1.0 + 0.002 * 2.0 + 1e-3 * 4.0)).abs() < 1e-12);
        let zeroed = LossWeights {
            lambda_dist: 0.0,
            lambda_mono: 0.0,
            lambda_norm: 0.0,
            mono_stop_iter: 0,
        };
        assert_eq!(combined_loss(&parts, 0, &zeroed), parts.l_color);
    }
}
