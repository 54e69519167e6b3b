//! End-to-end gradient checks of the joint training objective at tiny scale:
//! finite differences on the total loss versus the hand-rolled backward pass.

use gdekit_core::field::{
    backward_ray, trace_ray, FieldConfig, GradSink, RayState, RayUpstream, RenderParams,
    SceneField,
};
use gdekit_core::gde::{Bbox, GaussianParams, GaussianSet};
use gdekit_core::geom::{Camera, Vec3};
use gdekit_core::optim::{loss_distortion, LossWeights, SpecularDecoder};
use gdekit_core::rng;
use rand::Rng;

struct TinySetup {
    field: SceneField,
    set: GaussianSet,
    decoder: SpecularDecoder,
    camera: Camera,
    gt: Vec<Vec3>,
    mono: Vec<Vec3>,
    params: RenderParams,
    weights: LossWeights,
}

fn tiny_setup(seed: u64) -> TinySetup {
    let bbox = Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0));
    let mut r = rng::stream(seed, "tiny-e2e");
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
    .unwrap();
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
        n_importance: 0, // sample positions independent of parameters
        t_near_min: 0.05,
        background: Vec3::new(0.1, 0.15, 0.2),
        gate_eps: 0.0, // no attribute gating in the differentiated path
        opacity_threshold: 0.01,
    };
    let weights = LossWeights {
        lambda_dist: 0.002,
        lambda_mono: 1.0,
        lambda_norm: 1e-3,
        mono_stop_iter: u64::MAX,
    };
    TinySetup { field, set, decoder, camera, gt, mono, params, weights }
}

/// Deterministic total training loss over the 2x2 image.
fn total_loss(s: &TinySetup) -> f64 {
    let inv_b = 1.0 / 4.0;
    let mut state = RayState::default();
    let mut total = 0.0;
    for y in 0..2 {
        for x in 0..2 {
            let ray = s.camera.pixel_ray(x, y);
            trace_ray(
                &s.field,
                Some((&s.set, &s.decoder)),
                &ray,
                &s.params,
                0.0,
                &mut None,
                true,
                &mut state,
            );
            let pix = y * 2 + x;
            let diff = state.color - s.gt[pix];
            total += (diff.x.abs() + diff.y.abs() + diff.z.abs()) / 3.0 * inv_b;
            let (sm, sd) = state.normalized_spans();
            let w: Vec<f64> = state.samples[..state.n_samples].iter().map(|q| q.weight).collect();
            total += s.weights.lambda_dist * loss_distortion(&w, &sm, &sd) * inv_b;
            total += s.weights.lambda_norm * state.l_norm * inv_b;
            if state.opacity >= s.params.opacity_threshold && state.normal != Vec3::ZERO {
                let target = s.camera.normal_to_world(s.mono[pix]);
                total += s.weights.lambda_mono * (state.normal - target).norm_sq() * inv_b;
            }
        }
    }
    total
}

/// One full backward pass with the same upstream assembly.
fn total_grads(s: &TinySetup) -> GradSink {
    let inv_b = 1.0 / 4.0;
    let mut sink = GradSink::new(&s.field, &s.set, &s.decoder);
    let mut state = RayState::default();
    for y in 0..2 {
        for x in 0..2 {
            let ray = s.camera.pixel_ray(x, y);
            trace_ray(
                &s.field,
                Some((&s.set, &s.decoder)),
                &ray,
                &s.params,
                0.0,
                &mut None,
                true,
                &mut state,
            );
            let pix = y * 2 + x;
            let diff = state.color - s.gt[pix];
            let mut up = RayUpstream {
                d_color: Vec3::new(diff.x.signum(), diff.y.signum(), diff.z.signum())
                    * (inv_b / 3.0),
                d_normal: Vec3::ZERO,
                dist_scale: s.weights.lambda_dist * inv_b,
                norm_scale: s.weights.lambda_norm * inv_b,
            };
            if state.opacity >= s.params.opacity_threshold && state.normal != Vec3::ZERO {
                let target = s.camera.normal_to_world(s.mono[pix]);
                up.d_normal = (state.normal - target) * (2.0 * s.weights.lambda_mono * inv_b);
            }
            backward_ray(&s.field, &s.set, &s.decoder, &state, &up, &s.params, &mut sink);
        }
    }
    sink
}

/// Merges the sparse grid entries of the sink into dense buffers matching
/// the parameter blocks.
fn dense_grads(s: &TinySetup, sink: &GradSink) -> Vec<Vec<f64>> {
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for (li, g) in s.field.geo_grids.iter().enumerate() {
        let mut d = vec![0.0; g.data.len()];
        for &(idx, v) in &sink.geo[li] {
            d[idx as usize] += v;
        }
        blocks.push(d);
    }
    for (li, g) in s.field.normal_grids.iter().enumerate() {
        let mut d = vec![0.0; g.data.len()];
        for &(idx, v) in &sink.normal[li] {
            d[idx as usize] += v;
        }
        blocks.push(d);
    }
    blocks.push(sink.density_mlp.clone());
    blocks.push(sink.diffuse_mlp.clone());
    blocks.push(sink.tint_mlp.clone());
    blocks.push(sink.rough_mlp.clone());
    blocks.push(sink.normal_mlp.clone());
    blocks.push(sink.gaussians.clone());
    blocks.push(sink.decoder.clone());
    blocks
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut s = tiny_setup(0x7001);
    let sink = total_grads(&s);
    let blocks = dense_grads(&s, &sink);
    let n_field_blocks = blocks.len() - 2; // last two: gaussians, decoder

    let mut checked = 0;
    let mut max_rel: f64 = 0.0;
    let mut pick_rng = rng::stream(0xcafe, "param-picks");

    // A central difference straddling a rectifier or L1 kink measures the
    // wrong quantity; shrink the step until two consecutive estimates agree,
    // then compare against the analytic value.
    let mut fd_of = |s: &mut TinySetup, p: ParamRef| -> f64 {
        let mut h = 1e-5;
        let orig = p.get(s);
        let mut eval = |s: &mut TinySetup, v: f64, p: ParamRef| -> f64 {
            p.set(s, v);
            let l = total_loss(s);
            p.set(s, orig);
            l
        };
        let mut fd_at = |s: &mut TinySetup, h: f64| -> f64 {
            let lp = eval(s, orig + h, p);
            let lm = eval(s, orig - h, p);
            (lp - lm) / (2.0 * h)
        };
        let mut prev = fd_at(s, h);
        for _ in 0..4 {
            h *= 0.5;
            let cur = fd_at(s, h);
            if (cur - prev).abs() <= 0.05 * cur.abs().max(1e-6) {
                return cur;
            }
            prev = cur;
        }
        prev
    };

    let mut check = |s: &mut TinySetup, p: ParamRef, analytic: f64, label: &str| -> f64 {
        let fd = fd_of(s, p);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
        assert!(rel <= 1e-3, "{label}: fd {fd} vs analytic {analytic} (rel {rel})");
        rel
    };

    for block in 0..n_field_blocks {
        for _ in 0..2 {
            let idx = pick_rng.gen_range(0..blocks[block].len());
            let rel = check(&mut s, ParamRef::Block(block, idx), blocks[block][idx],
                &format!("block {block} idx {idx}"));
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    let gauss_len = s.set.len() * GaussianParams::PARAM_COUNT;
    for _ in 0..3 {
        let idx = pick_rng.gen_range(0..gauss_len);
        let rel = check(&mut s, ParamRef::Gauss(idx), sink.gaussians[idx],
            &format!("gaussian idx {idx}"));
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    for _ in 0..3 {
        let idx = pick_rng.gen_range(0..s.decoder.mlp.params.len());
        let rel = check(&mut s, ParamRef::Dec(idx), sink.decoder[idx],
            &format!("decoder idx {idx}"));
        max_rel = max_rel.max(rel);
        checked += 1;
    }

    assert!(checked >= 20, "checked {checked} parameters");
    println!("end-to-end gradient check: {checked} params, max rel err {max_rel:.3e}");
}

/// Addressable parameter across every trainable family.
#[derive(Clone, Copy)]
enum ParamRef {
    /// Field block (grids in order, then the five heads).
    Block(usize, usize),
    /// Flat Gaussian parameter (raw, no renormalization).
    Gauss(usize),
    Dec(usize),
}

impl ParamRef {
    fn get(self, s: &TinySetup) -> f64 {
        match self {
            ParamRef::Block(b, i) => block_slice(s, b)[i],
            ParamRef::Gauss(i) => s.set.flatten()[i],
            ParamRef::Dec(i) => s.decoder.mlp.params[i],
        }
    }

    fn set(self, s: &mut TinySetup, v: f64) {
        match self {
            ParamRef::Block(b, i) => block_slice_mut(s, b)[i] = v,
            ParamRef::Gauss(i) => {
                let mut flat = s.set.flatten();
                flat[i] = v;
                set_flat_raw(&mut s.set, &flat);
            }
            ParamRef::Dec(i) => s.decoder.mlp.params[i] = v,
        }
    }
}

fn block_slice(s: &TinySetup, block: usize) -> &[f64] {
    let n_geo = s.field.geo_grids.len();
    let n_norm = s.field.normal_grids.len();
    if block < n_geo {
        return &s.field.geo_grids[block].data;
    }
    let b = block - n_geo;
    if b < n_norm {
        return &s.field.normal_grids[b].data;
    }
    match b - n_norm {
        0 => &s.field.density_mlp.params,
        1 => &s.field.diffuse_mlp.params,
        2 => &s.field.tint_mlp.params,
        3 => &s.field.rough_mlp.params,
        4 => &s.field.normal_mlp.params,
        _ => unreachable!(),
    }
}

fn block_slice_mut(s: &mut TinySetup, block: usize) -> &mut [f64] {
    let n_geo = s.field.geo_grids.len();
    let n_norm = s.field.normal_grids.len();
    if block < n_geo {
        return &mut s.field.geo_grids[block].data;
    }
    let b = block - n_geo;
    if b < n_norm {
        return &mut s.field.normal_grids[b].data;
    }
    match b - n_norm {
        0 => &mut s.field.density_mlp.params,
        1 => &mut s.field.diffuse_mlp.params,
        2 => &mut s.field.tint_mlp.params,
        3 => &mut s.field.rough_mlp.params,
        4 => &mut s.field.normal_mlp.params,
        _ => unreachable!(),
    }
}

/// Writes flat parameters without quaternion renormalization so finite
/// differences see the raw parameterization (the forward normalizes).
fn set_flat_raw(set: &mut GaussianSet, flat: &[f64]) {
    for (i, g) in set.gaussians.iter_mut().enumerate() {
        *g = GaussianParams::from_flat(&flat[i * GaussianParams::PARAM_COUNT..(i + 1) * GaussianParams::PARAM_COUNT]);
    }
}

#[test]
fn loss_is_finite_and_gradients_flow_everywhere() {
    let s = tiny_setup(0x7002);
    let loss = total_loss(&s);
    assert!(loss.is_finite() && loss > 0.0, "loss {loss}");
    let sink = total_grads(&s);
    let blocks = dense_grads(&s, &sink);
    for (bi, b) in blocks.iter().enumerate() {
        let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "block {bi} received no gradient");
    }
}
