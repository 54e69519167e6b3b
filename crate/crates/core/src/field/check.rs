//! Self-contained end-to-end gradient verification harness: a tiny scene
//! (8^3 grids, 4 Gaussians, 2x2 image) where finite differences on the full
//! training loss are compared against the backward pass.

use rand::Rng;
use serde::Serialize;

use crate::gde::{Bbox, GaussianParams, GaussianSet};
use crate::geom::{Camera, Vec3};
use crate::optim::{loss_distortion, LossWeights, SpecularDecoder};
use crate::rng;

use super::render::{backward_ray, trace_ray, GradSink, RayState, RayUpstream, RenderParams};
use super::scene::{FieldConfig, SceneField};

#[derive(Clone, Debug, Serialize)]
pub struct TinyCheckReport {
    pub params_checked: usize,
    pub max_rel: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Harness {
    field: SceneField,
    set: GaussianSet,
    decoder: SpecularDecoder,
    camera: Camera,
    gt: Vec<Vec3>,
    mono: Vec<Vec3>,
    params: RenderParams,
    weights: LossWeights,
}

fn harness(seed: u64) -> Harness {
    let bbox = Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0));
    let mut r = rng::stream(seed, "tiny-check");
    let field = SceneField::new(FieldConfig::tiny(bbox), &mut r);
    let set = GaussianSet::init_in_bbox(4, bbox, &mut r);
    let decoder = SpecularDecoder::new(4, &mut r);
    let camera = Camera::look_at(
        2.0,
        2.0,
        1.0,
        1.0,
        Vec3::new(0.0, 0.0, -0.9),
        Vec3::new(0.05, -0.02, 0.5),
        Vec3::new(0.0, 1.0, 0.0),
        2,
        2,
    )
    .expect("tiny camera");
    let gt = (0..4)
        .map(|_| Vec3::new(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)))
        .collect();
    let mono = (0..4)
        .map(|_| {
            Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..-0.2))
                .normalized()
        })
        .collect();
    let params = RenderParams {
        n_coarse: 16,
        n_importance: 0,
        t_near_min: 0.05,
        background: Vec3::new(0.1, 0.15, 0.2),
        gate_eps: 0.0,
        opacity_threshold: 0.01,
    };
    let weights = LossWeights {
        lambda_dist: 0.002,
        lambda_mono: 1.0,
        lambda_norm: 1e-3,
        mono_stop_iter: u64::MAX,
    };
    Harness { field, set, decoder, camera, gt, mono, params, weights }
}

fn total_loss(h: &Harness) -> f64 {
    let inv_b = 0.25;
    let mut state = RayState::default();
    let mut total = 0.0;
    for y in 0..2 {
        for x in 0..2 {
            let ray = h.camera.pixel_ray(x, y);
            trace_ray(
                &h.field,
                Some((&h.set, &h.decoder)),
                &ray,
                &h.params,
                0.0,
                &mut None,
                true,
                &mut state,
            );
            let pix = y * 2 + x;
            let diff = state.color - h.gt[pix];
            total += (diff.x.abs() + diff.y.abs() + diff.z.abs()) / 3.0 * inv_b;
            let (sm, sd) = state.normalized_spans();
            let w: Vec<f64> =
                state.samples[..state.n_samples].iter().map(|q| q.weight).collect();
            total += h.weights.lambda_dist * loss_distortion(&w, &sm, &sd) * inv_b;
            total += h.weights.lambda_norm * state.l_norm * inv_b;
            if state.opacity >= h.params.opacity_threshold && state.normal != Vec3::ZERO {
                let target = h.camera.normal_to_world(h.mono[pix]);
                total += h.weights.lambda_mono * (state.normal - target).norm_sq() * inv_b;
            }
        }
    }
    total
}

fn total_grads(h: &Harness) -> GradSink {
    let inv_b = 0.25;
    let mut sink = GradSink::new(&h.field, &h.set, &h.decoder);
    let mut state = RayState::default();
    for y in 0..2 {
        for x in 0..2 {
            let ray = h.camera.pixel_ray(x, y);
            trace_ray(
                &h.field,
                Some((&h.set, &h.decoder)),
                &ray,
                &h.params,
                0.0,
                &mut None,
                true,
                &mut state,
            );
            let pix = y * 2 + x;
            let diff = state.color - h.gt[pix];
            let mut up = RayUpstream {
                d_color: Vec3::new(diff.x.signum(), diff.y.signum(), diff.z.signum())
                    * (inv_b / 3.0),
                d_normal: Vec3::ZERO,
                dist_scale: h.weights.lambda_dist * inv_b,
                norm_scale: h.weights.lambda_norm * inv_b,
            };
            if state.opacity >= h.params.opacity_threshold && state.normal != Vec3::ZERO {
                let target = h.camera.normal_to_world(h.mono[pix]);
                up.d_normal = (state.normal - target) * (2.0 * h.weights.lambda_mono * inv_b);
            }
            backward_ray(&h.field, &h.set, &h.decoder, &state, &up, &h.params, &mut sink);
        }
    }
    sink
}

/// Runs the tiny end-to-end check over `n_params` sampled parameters.
pub fn tiny_gradient_check(seed: u64, n_params: usize, tolerance: f64) -> TinyCheckReport {
    let mut h = harness(seed);
    let sink = total_grads(&h);

    // Dense parameter/gradient views in a fixed block order.
    let mut dense: Vec<Vec<f64>> = Vec::new();
    for (li, g) in h.field.geo_grids.iter().enumerate() {
        let mut d = vec![0.0; g.data.len()];
        for &(idx, v) in &sink.geo[li] {
            d[idx as usize] += v;
        }
        dense.push(d);
    }
    for (li, g) in h.field.normal_grids.iter().enumerate() {
        let mut d = vec![0.0; g.data.len()];
        for &(idx, v) in &sink.normal[li] {
            d[idx as usize] += v;
        }
        dense.push(d);
    }
    dense.push(sink.density_mlp.clone());
    dense.push(sink.diffuse_mlp.clone());
    dense.push(sink.tint_mlp.clone());
    dense.push(sink.rough_mlp.clone());
    dense.push(sink.normal_mlp.clone());
    dense.push(sink.gaussians.clone());
    dense.push(sink.decoder.clone());
    let n_blocks = dense.len();

    let mut pick = rng::stream(seed, "tiny-check-picks");
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    while checked < n_params {
        let block = checked % n_blocks;
        let idx = pick.gen_range(0..dense[block].len());
        let analytic = dense[block][idx];
        let orig = get_param(&h, block, idx);

        // Adaptive central difference: shrink until stable.
        let mut hstep = 1e-5;
        let mut fd = {
            set_param(&mut h, block, idx, orig + hstep);
            let lp = total_loss(&h);
            set_param(&mut h, block, idx, orig - hstep);
            let lm = total_loss(&h);
            set_param(&mut h, block, idx, orig);
            (lp - lm) / (2.0 * hstep)
        };
        for _ in 0..4 {
            hstep *= 0.5;
            set_param(&mut h, block, idx, orig + hstep);
            let lp = total_loss(&h);
            set_param(&mut h, block, idx, orig - hstep);
            let lm = total_loss(&h);
            set_param(&mut h, block, idx, orig);
            let cur = (lp - lm) / (2.0 * hstep);
            if (cur - fd).abs() <= 0.05 * cur.abs().max(1e-6) {
                fd = cur;
                break;
            }
            fd = cur;
        }
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    TinyCheckReport {
        params_checked: checked,
        max_rel,
        tolerance,
        passed: max_rel <= tolerance,
    }
}

fn get_param(h: &Harness, block: usize, idx: usize) -> f64 {
    let n_geo = h.field.geo_grids.len();
    let n_norm = h.field.normal_grids.len();
    if block < n_geo {
        return h.field.geo_grids[block].data[idx];
    }
    let b = block - n_geo;
    if b < n_norm {
        return h.field.normal_grids[b].data[idx];
    }
    match b - n_norm {
        0 => h.field.density_mlp.params[idx],
        1 => h.field.diffuse_mlp.params[idx],
        2 => h.field.tint_mlp.params[idx],
        3 => h.field.rough_mlp.params[idx],
        4 => h.field.normal_mlp.params[idx],
        5 => h.set.flatten()[idx],
        6 => h.decoder.mlp.params[idx],
        _ => unreachable!(),
    }
}

fn set_param(h: &mut Harness, block: usize, idx: usize, v: f64) {
    let n_geo = h.field.geo_grids.len();
    let n_norm = h.field.normal_grids.len();
    if block < n_geo {
        h.field.geo_grids[block].data[idx] = v;
        return;
    }
    let b = block - n_geo;
    if b < n_norm {
        h.field.normal_grids[b].data[idx] = v;
        return;
    }
    match b - n_norm {
        0 => h.field.density_mlp.params[idx] = v,
        1 => h.field.diffuse_mlp.params[idx] = v,
        2 => h.field.tint_mlp.params[idx] = v,
        3 => h.field.rough_mlp.params[idx] = v,
        4 => h.field.normal_mlp.params[idx] = v,
        5 => {
            // Raw flat write; the forward normalizes quaternions itself.
            let mut flat = h.set.flatten();
            flat[idx] = v;
            for (i, g) in h.set.gaussians.iter_mut().enumerate() {
                *g = GaussianParams::from_flat(
                    &flat[i * GaussianParams::PARAM_COUNT..(i + 1) * GaussianParams::PARAM_COUNT],
                );
            }
        }
        6 => h.decoder.mlp.params[idx] = v,
        _ => unreachable!(),
    }
}
