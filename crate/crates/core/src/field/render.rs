//! Volumetric rendering with emission-absorption weights, one-per-ray
//! specular shading through the Gaussian directional encoding, and the
//! matching hand-rolled backward pass.

use crate::error::{Error, Result};
use crate::gde::{encode, encode_grad, GaussianParams, GaussianSet, RHO_MIN};
use crate::geom::{sh_basis, Ray, Vec3};
use crate::optim::losses::G_EPS;
use crate::optim::{MlpTrace, SpecularDecoder};

use super::scene::{AttributeTrace, DensityTrace, SampleAttributes, SceneField};

/// Transmittance exponent clamp; keeps 1 - alpha away from underflow so the
/// backward pass never divides by zero.
const TAU_DELTA_MAX: f64 = 80.0;
/// Opacity guard in the depth normalization.
const DEPTH_EPS: f64 = 1e-8;
/// Below this blended-normal norm the screen normal is reported as zero.
const NORMAL_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct RenderParams {
    pub n_coarse: usize,
    pub n_importance: usize,
    /// Rays start no closer than this.
    pub t_near_min: f64,
    pub background: Vec3,
    /// Samples with weight <= gate_eps skip the attribute heads (0 disables).
    pub gate_eps: f64,
    /// Below this opacity the specular stage is skipped.
    pub opacity_threshold: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            n_coarse: 24,
            n_importance: 16,
            t_near_min: 0.05,
            background: Vec3::ZERO,
            gate_eps: 1e-4,
            opacity_threshold: 0.01,
        }
    }
}

/// Mirror reflection of `d` about the unit normal `n`.
pub fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Sign-corrects the raw predicted normal so it opposes the view direction:
/// n' = -sign(d . n_raw) n_raw / |n_raw|, with sign(0) treated as +1.
/// A zero raw normal falls back to -d and is flagged.
pub fn correct_normal(d: Vec3, n_raw: Vec3) -> (Vec3, bool) {
    let norm = n_raw.norm();
    if norm < NORMAL_EPS {
        return (-d, true);
    }
    let sign = if d.dot(n_raw) >= 0.0 { 1.0 } else { -1.0 };
    (n_raw * (-sign / norm), false)
}

/// Central differences of a scalar field along the three axes; exact on
/// linear fields.
pub fn central_diff3(mut f: impl FnMut(Vec3) -> f64, x: Vec3, eps: f64) -> Vec3 {
    debug_assert!(eps > 0.0);
    let ex = Vec3::new(eps, 0.0, 0.0);
    let ey = Vec3::new(0.0, eps, 0.0);
    let ez = Vec3::new(0.0, 0.0, eps);
    Vec3::new(
        (f(x + ex) - f(x - ex)) / (2.0 * eps),
        (f(x + ey) - f(x - ey)) / (2.0 * eps),
        (f(x + ez) - f(x - ez)) / (2.0 * eps),
    )
}

/// Central-difference density gradient with the cone-radius step
/// eps = max(t * base_radius, eps_min); six extra field queries.
pub fn density_gradient_numeric(
    field: &SceneField,
    x: Vec3,
    t: f64,
    base_radius: f64,
    scratch: &mut DensityTrace,
) -> Vec3 {
    let eps = (t * base_radius).max(1e-6);
    central_diff3(|p| field.density_at(p, scratch), x, eps)
}

/// Everything produced while rendering one pixel.
#[derive(Clone, Debug, Default)]
pub struct RenderOutput {
    pub color: Vec3,
    pub diffuse: Vec3,
    pub specular: Vec3,
    pub tint: Vec3,
    pub roughness: f64,
    pub normal: Vec3,
    pub depth: f64,
    pub opacity: f64,
    pub weights: Vec<f64>,
    pub t_mids: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Per-sample forward state kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct SampleState {
    pub t_mid: f64,
    pub delta: f64,
    pub density: DensityTrace,
    pub attrs: AttributeTrace,
    pub att: SampleAttributes,
    pub active: bool,
    pub alpha: f64,
    pub trans: f64,
    pub weight: f64,
    /// Corrected unit normal and the pieces of its Jacobian.
    pub n_corrected: Vec3,
    pub n_sign: f64,
    pub n_raw_norm: f64,
    pub n_flagged: bool,
}

/// Density-gradient supervision record for one qualifying sample.
#[derive(Clone, Debug, Default)]
pub struct NormItem {
    pub sample: usize,
    pub ghat: Vec3,
    pub g_norm: f64,
    pub eps: f64,
    /// n' + ghat, the residual of the normal prediction loss.
    pub residual: Vec3,
    /// Traces of the 6 offset density queries (+x, -x, +y, -y, +z, -z).
    pub queries: Vec<DensityTrace>,
}

/// Full forward state of one ray.
#[derive(Clone, Debug, Default)]
pub struct RayState {
    pub ray: Ray,
    pub hit: bool,
    pub t_near: f64,
    pub t_far: f64,
    pub sh_view: Vec<f64>,
    pub samples: Vec<SampleState>,
    pub n_samples: usize,
    pub c_d: Vec3,
    pub s_tint: Vec3,
    pub rho_blend: f64,
    pub rho_px: f64,
    pub blended_normal: Vec3,
    pub normal: Vec3,
    pub depth: f64,
    pub opacity: f64,
    pub spec_active: bool,
    pub reflected: Ray,
    pub rho_enc: f64,
    pub enc: Vec<f64>,
    pub dec_trace: MlpTrace,
    pub c_s: Vec3,
    pub color: Vec3,
    pub norm_items: Vec<NormItem>,
    pub l_norm: f64,
    coarse_scratch: DensityTrace,
    fences: Vec<f64>,
}

/// Slab intersection of the ray with the scene box.
pub fn ray_bbox_range(field: &SceneField, ray: &Ray, t_near_min: f64) -> Option<(f64, f64)> {
    let bbox = field.bbox();
    let mut t0 = t_near_min;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let (o, d, lo, hi) = match axis {
            0 => (ray.origin.x, ray.direction.x, bbox.min.x, bbox.max.x),
            1 => (ray.origin.y, ray.direction.y, bbox.min.y, bbox.max.y),
            _ => (ray.origin.z, ray.direction.z, bbox.min.z, bbox.max.z),
        };
        if d.abs() < 1e-12 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
    }
    if t1 <= t0 {
        None
    } else {
        Some((t0, t1))
    }
}

/// Sorted stratified fence positions (n_mids + 1 of them). `jitter` draws
/// from the RNG when provided, otherwise bin centers are used.
fn stratified_fences(
    t_near: f64,
    t_far: f64,
    n_fences: usize,
    rng: &mut Option<&mut dyn FnMut() -> f64>,
    out: &mut Vec<f64>,
) {
    out.clear();
    let span = t_far - t_near;
    for j in 0..n_fences {
        let u = match rng {
            Some(r) => r(),
            None => 0.5,
        };
        out.push(t_near + (j as f64 + u) / n_fences as f64 * span);
    }
}

/// Renders one ray, recording the full trace. `decoder`/`set` drive the
/// specular stage; pass `None` to render without it (the volume_render
/// contract).
#[allow(clippy::too_many_arguments)]
pub fn trace_ray(
    field: &SceneField,
    spec: Option<(&GaussianSet, &SpecularDecoder)>,
    ray: &Ray,
    params: &RenderParams,
    roughness_offset: f64,
    jitter: &mut Option<&mut dyn FnMut() -> f64>,
    want_norm_items: bool,
    state: &mut RayState,
) {
    state.ray = *ray;
    state.norm_items.clear();
    state.l_norm = 0.0;
    state.n_samples = 0;
    state.spec_active = false;
    state.c_s = Vec3::ZERO;
    let range = ray_bbox_range(field, ray, params.t_near_min);
    let Some((t_near, t_far)) = range else {
        state.hit = false;
        state.opacity = 0.0;
        state.color = params.background;
        state.c_d = Vec3::ZERO;
        state.s_tint = Vec3::ZERO;
        state.normal = Vec3::ZERO;
        state.depth = 0.0;
        return;
    };
    state.hit = true;
    state.t_near = t_near;
    state.t_far = t_far;
    state.sh_view = sh_basis(ray.direction, field.cfg.sh_degree).expect("bounded degree");

    // Pass 1: uniform fences -> density -> proposal weights.
    stratified_fences(t_near, t_far, params.n_coarse + 1, jitter, &mut state.fences);
    if params.n_importance > 0 {
        let coarse = state.fences.clone();
        let mut wsum = Vec::with_capacity(params.n_coarse);
        let mut trans = 1.0;
        for i in 0..params.n_coarse {
            let mid = 0.5 * (coarse[i] + coarse[i + 1]);
            let delta = coarse[i + 1] - coarse[i];
            let tau = field.density_at(ray.point_at(mid), &mut state.coarse_scratch);
            let alpha = 1.0 - (-(tau * delta).min(TAU_DELTA_MAX)).exp();
            wsum.push(trans * alpha + 1e-2);
            trans *= 1.0 - alpha;
        }
        let total: f64 = wsum.iter().sum();
        // Inverse-CDF draws merged with the coarse fences.
        let mut extra = Vec::with_capacity(params.n_importance);
        for k in 0..params.n_importance {
            let u = match jitter {
                Some(r) => (k as f64 + r()) / params.n_importance as f64,
                None => (k as f64 + 0.5) / params.n_importance as f64,
            };
            let target = u * total;
            let mut acc = 0.0;
            let mut picked = coarse[params.n_coarse];
            for i in 0..params.n_coarse {
                let next = acc + wsum[i];
                if target <= next || i == params.n_coarse - 1 {
                    let f = ((target - acc) / wsum[i]).clamp(0.0, 1.0);
                    picked = coarse[i] + f * (coarse[i + 1] - coarse[i]);
                    break;
                }
                acc = next;
            }
            extra.push(picked);
        }
        state.fences.extend(extra);
        state.fences.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    let n = state.fences.len() - 1;
    state.n_samples = n;
    if state.samples.len() < n {
        state.samples.resize(n, SampleState::default());
    }

    // Pass 2: full evaluation at fence midpoints.
    let mut trans = 1.0;
    for i in 0..n {
        let (f0, f1) = (state.fences[i], state.fences[i + 1]);
        let s = &mut state.samples[i];
        s.t_mid = 0.5 * (f0 + f1);
        s.delta = f1 - f0;
        let x = ray.point_at(s.t_mid);
        field.density_trace(x, &mut s.density);
        let tau = s.density.density;
        s.alpha = 1.0 - (-(tau * s.delta).min(TAU_DELTA_MAX)).exp();
        s.trans = trans;
        s.weight = trans * s.alpha;
        trans *= 1.0 - s.alpha;
        s.active = false;
    }

    // Blends. The attribute heads run only where the weight clears the gate.
    let mut c_d = Vec3::ZERO;
    let mut s_tint = Vec3::ZERO;
    let mut rho = 0.0;
    let mut nv = Vec3::ZERO;
    let mut depth_acc = 0.0;
    let mut opacity = 0.0;
    for i in 0..n {
        let s = &mut state.samples[i];
        opacity += s.weight;
        depth_acc += s.weight * s.t_mid;
        if !s.density.inside || s.weight <= params.gate_eps {
            continue;
        }
        s.active = true;
        let x = ray.point_at(s.t_mid);
        s.att = field.attributes_trace(x, &s.density, &state.sh_view, &mut s.attrs);
        let (nc, flagged) = correct_normal(ray.direction, s.att.normal_raw);
        s.n_corrected = nc;
        s.n_flagged = flagged;
        s.n_raw_norm = s.att.normal_raw.norm();
        s.n_sign = if ray.direction.dot(s.att.normal_raw) >= 0.0 { 1.0 } else { -1.0 };
        c_d += s.att.diffuse * s.weight;
        s_tint += s.att.tint * s.weight;
        rho += s.att.roughness * s.weight;
        nv += nc * s.weight;
    }
    state.c_d = c_d;
    state.s_tint = s_tint;
    state.rho_blend = rho;
    state.rho_px = rho.max(RHO_MIN);
    state.blended_normal = nv;
    state.opacity = opacity;
    state.depth = depth_acc / opacity.max(DEPTH_EPS);
    state.normal = if nv.norm() > NORMAL_EPS { nv.normalized() } else { Vec3::ZERO };

    // Normal-prediction supervision data (density gradient per active
    // sample with a usable magnitude).
    if want_norm_items {
        let mut acc = 0.0;
        for i in 0..n {
            let s = &state.samples[i];
            if !s.active {
                continue;
            }
            let x = ray.point_at(s.t_mid);
            let eps = (s.t_mid * ray.base_radius).max(1e-6);
            let mut queries = vec![DensityTrace::default(); 6];
            let mut g = [0.0; 3];
            for axis in 0..3 {
                let mut off = Vec3::ZERO;
                match axis {
                    0 => off.x = eps,
                    1 => off.y = eps,
                    _ => off.z = eps,
                }
                field.density_trace(x + off, &mut queries[axis * 2]);
                field.density_trace(x - off, &mut queries[axis * 2 + 1]);
                g[axis] =
                    (queries[axis * 2].density - queries[axis * 2 + 1].density) / (2.0 * eps);
            }
            let g = Vec3::new(g[0], g[1], g[2]);
            let g_norm = g.norm();
            if g_norm <= G_EPS {
                continue;
            }
            let ghat = g / g_norm;
            let residual = s.n_corrected + ghat;
            acc += residual.norm_sq();
            state.norm_items.push(NormItem {
                sample: i,
                ghat,
                g_norm,
                eps,
                residual,
                queries,
            });
        }
        if !state.norm_items.is_empty() {
            state.l_norm = acc / state.norm_items.len() as f64;
        }
    }

    // Specular stage: once per ray at the blended surface.
    let diffuse_part = c_d + params.background * (1.0 - opacity);
    if let Some((set, decoder)) = spec {
        if opacity >= params.opacity_threshold && state.normal != Vec3::ZERO {
            let o_r = ray.origin + ray.direction * state.depth;
            let d_r = reflect(ray.direction, state.normal);
            state.reflected = Ray { origin: o_r, direction: d_r, base_radius: ray.base_radius };
            state.rho_enc = state.rho_px + roughness_offset;
            state.enc = encode(set, &state.reflected, state.rho_enc).values;
            decoder.mlp.forward_trace(&state.enc, &mut state.dec_trace);
            state.c_s = Vec3::new(
                state.dec_trace.output[0],
                state.dec_trace.output[1],
                state.dec_trace.output[2],
            );
            state.spec_active = true;
        }
    }
    state.color = diffuse_part + state.c_s.mul_elem(state.s_tint);
}

impl RayState {
    pub fn to_output(&self) -> RenderOutput {
        RenderOutput {
            color: self.color,
            diffuse: self.c_d,
            specular: self.c_s,
            tint: self.s_tint,
            roughness: self.rho_px,
            normal: self.normal,
            depth: self.depth,
            opacity: self.opacity,
            weights: self.samples[..self.n_samples].iter().map(|s| s.weight).collect(),
            t_mids: self.samples[..self.n_samples].iter().map(|s| s.t_mid).collect(),
            deltas: self.samples[..self.n_samples].iter().map(|s| s.delta).collect(),
        }
    }

    /// Normalized midpoints and interval lengths for the distortion loss.
    pub fn normalized_spans(&self) -> (Vec<f64>, Vec<f64>) {
        let span = (self.t_far - self.t_near).max(1e-12);
        let s = self.samples[..self.n_samples]
            .iter()
            .map(|x| (x.t_mid - self.t_near) / span)
            .collect();
        let ds = self.samples[..self.n_samples]
            .iter()
            .map(|x| x.delta / span)
            .collect();
        (s, ds)
    }
}

/// Volumetric rendering without the specular stage; deterministic sampling.
pub fn volume_render(
    field: &SceneField,
    ray: &Ray,
    n_samples: usize,
    params: &RenderParams,
) -> Result<RenderOutput> {
    if n_samples < 2 {
        return Err(Error::invalid("volume_render needs at least 2 samples"));
    }
    let mut p = *params;
    p.n_coarse = n_samples;
    let mut state = RayState::default();
    trace_ray(field, None, ray, &p, 0.0, &mut None, false, &mut state);
    Ok(state.to_output())
}

/// Full per-pixel shading: volumetric pass plus one specular evaluation on
/// the blended surface. Float-pipeline output (identity tone map).
pub fn shade_pixel(
    field: &SceneField,
    set: &GaussianSet,
    decoder: &SpecularDecoder,
    ray: &Ray,
    roughness_offset: f64,
    params: &RenderParams,
) -> RenderOutput {
    let mut state = RayState::default();
    trace_ray(
        field,
        Some((set, decoder)),
        ray,
        params,
        roughness_offset,
        &mut None,
        false,
        &mut state,
    );
    state.to_output()
}

/// Gradient sinks for one chunk of rays. Grid gradients stay sparse until
/// the deterministic merge.
#[derive(Clone, Debug, Default)]
pub struct GradSink {
    pub geo: Vec<Vec<(u32, f64)>>,
    pub normal: Vec<Vec<(u32, f64)>>,
    pub density_mlp: Vec<f64>,
    pub diffuse_mlp: Vec<f64>,
    pub tint_mlp: Vec<f64>,
    pub rough_mlp: Vec<f64>,
    pub normal_mlp: Vec<f64>,
    pub gaussians: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl GradSink {
    pub fn new(field: &SceneField, set: &GaussianSet, decoder: &SpecularDecoder) -> Self {
        Self {
            geo: vec![Vec::new(); field.geo_grids.len()],
            normal: vec![Vec::new(); field.normal_grids.len()],
            density_mlp: vec![0.0; field.density_mlp.params.len()],
            diffuse_mlp: vec![0.0; field.diffuse_mlp.params.len()],
            tint_mlp: vec![0.0; field.tint_mlp.params.len()],
            rough_mlp: vec![0.0; field.rough_mlp.params.len()],
            normal_mlp: vec![0.0; field.normal_mlp.params.len()],
            gaussians: vec![0.0; set.len() * GaussianParams::PARAM_COUNT],
            decoder: vec![0.0; decoder.mlp.params.len()],
        }
    }
}

/// Upstream gradients feeding [`backward_ray`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RayUpstream {
    /// dL/d(color).
    pub d_color: Vec3,
    /// dL/d(screen normal), e.g. from the monocular loss.
    pub d_normal: Vec3,
    /// Scale on the distortion-loss gradient (lambda_dist / batch).
    pub dist_scale: f64,
    /// Scale on the normal-prediction-loss gradient (lambda_norm / batch).
    pub norm_scale: f64,
}

/// Backward pass matching [`trace_ray`] exactly.
pub fn backward_ray(
    field: &SceneField,
    set: &GaussianSet,
    decoder: &SpecularDecoder,
    state: &RayState,
    up: &RayUpstream,
    params: &RenderParams,
    sink: &mut GradSink,
) {
    if !state.hit {
        return;
    }
    let n = state.n_samples;
    let ray = &state.ray;
    let mut dw = vec![0.0; n];
    let fdim = field.cfg.feature_dim;
    let mut d_feat16 = vec![0.0; n * fdim];
    let mut d_in_scratch: Vec<f64> = Vec::new();

    // Color composition: color = c_d + c_s * s + bg (1 - O).
    let d_cd = up.d_color;
    let d_s_tint = up.d_color.mul_elem(state.c_s);
    let d_opacity = -up.d_color.dot(params.background);

    // Specular path.
    let mut d_normal_total = up.d_normal;
    let mut d_rho_px = 0.0;
    let mut d_depth = 0.0;
    if state.spec_active {
        let d_cs = up.d_color.mul_elem(state.s_tint);
        let d_out = [d_cs.x, d_cs.y, d_cs.z];
        let mut d_enc = Vec::new();
        decoder
            .mlp
            .backward(&state.dec_trace, &d_out, &mut sink.decoder, &mut d_enc);
        let eg = encode_grad(set, &state.reflected, state.rho_enc, &d_enc);
        for (i, gg) in eg.per_gaussian.iter().enumerate() {
            gg.add_to_flat(
                &mut sink.gaussians
                    [i * GaussianParams::PARAM_COUNT..(i + 1) * GaussianParams::PARAM_COUNT],
            );
        }
        // o_r = o + depth * d.
        d_depth += eg.d_origin.dot(ray.direction);
        // d_r = d - 2 (d.n) n: dL/dn = -2 [ d (dL/dd_r . n) + (d.n) dL/dd_r ].
        let ddr = eg.d_direction;
        let n_hat = state.normal;
        d_normal_total +=
            (ray.direction * ddr.dot(n_hat) + ddr * ray.direction.dot(n_hat)) * -2.0;
        // rho_enc = rho_px + offset; rho_px = max(rho_blend, RHO_MIN).
        d_rho_px += eg.d_rho;
    }
    let d_rho_blend = if state.rho_blend > RHO_MIN { d_rho_px } else { 0.0 };

    // Screen normal normalization.
    let nv = state.blended_normal;
    let d_nv = if nv.norm() > NORMAL_EPS {
        let inv = 1.0 / nv.norm();
        (d_normal_total - state.normal * state.normal.dot(d_normal_total)) * inv
    } else {
        Vec3::ZERO
    };

    // Depth: t0 = sum(w t) / max(O, eps).
    let denom = state.opacity.max(DEPTH_EPS);
    for i in 0..n {
        let s = &state.samples[i];
        if state.opacity > DEPTH_EPS {
            dw[i] += d_depth * (s.t_mid - state.depth) / denom;
        } else {
            dw[i] += d_depth * s.t_mid / DEPTH_EPS;
        }
        dw[i] += d_opacity;
    }

    // Distortion loss.
    if up.dist_scale != 0.0 {
        let (s_mids, s_ds) = state.normalized_spans();
        let w: Vec<f64> = state.samples[..n].iter().map(|s| s.weight).collect();
        let mut dist_grad = vec![0.0; n];
        crate::optim::losses::loss_distortion_grad(&w, &s_mids, &s_ds, &mut dist_grad);
        for i in 0..n {
            dw[i] += up.dist_scale * dist_grad[i];
        }
    }

    // Normal-prediction loss: per qualifying sample, residual = n' + ghat.
    let mut d_ncorr = vec![Vec3::ZERO; n];
    if up.norm_scale != 0.0 && !state.norm_items.is_empty() {
        let m = state.norm_items.len() as f64;
        for item in &state.norm_items {
            let scale = 2.0 * up.norm_scale / m;
            d_ncorr[item.sample] += item.residual * scale;
            // Through ghat = g / |g|.
            let d_ghat = item.residual * scale;
            let d_g = (d_ghat - item.ghat * item.ghat.dot(d_ghat)) / item.g_norm;
            // Central differences: g_a = (tau+ - tau-) / (2 eps).
            for axis in 0..3 {
                let d_axis = [d_g.x, d_g.y, d_g.z][axis] / (2.0 * item.eps);
                for (qi, sign) in [(axis * 2, 1.0), (axis * 2 + 1, -1.0)] {
                    let q = &item.queries[qi];
                    if !q.inside {
                        continue;
                    }
                    let d_tau = sign * d_axis;
                    if d_tau == 0.0 {
                        continue;
                    }
                    let d_raw = d_tau * SceneField::density_derivative(q.raw, q.density);
                    backward_density_query(field, q, d_raw, &[], sink, &mut d_in_scratch);
                }
            }
        }
    }

    // Attribute blends.
    for i in 0..n {
        let s = &state.samples[i];
        if !s.active {
            continue;
        }
        // Blend upstreams.
        dw[i] += s.att.diffuse.dot(d_cd)
            + s.att.tint.dot(d_s_tint)
            + s.att.roughness * d_rho_blend
            + s.n_corrected.dot(d_nv);
        let d_diffuse = d_cd * s.weight;
        let d_tint = d_s_tint * s.weight;
        let d_rough = d_rho_blend * s.weight;
        let d_ncorr_i = d_ncorr[i] + d_nv * s.weight;

        // Diffuse head.
        let feat_grad = &mut d_feat16[i * fdim..(i + 1) * fdim];
        field.diffuse_mlp.backward(
            &s.attrs.diffuse,
            &[d_diffuse.x, d_diffuse.y, d_diffuse.z],
            &mut sink.diffuse_mlp,
            &mut d_in_scratch,
        );
        for (f, d) in feat_grad.iter_mut().zip(d_in_scratch.iter()) {
            *f += d;
        }
        // Tint head (input = feat16 ++ sh(view)).
        field.tint_mlp.backward(
            &s.attrs.tint,
            &[d_tint.x, d_tint.y, d_tint.z],
            &mut sink.tint_mlp,
            &mut d_in_scratch,
        );
        for (f, d) in feat_grad.iter_mut().zip(d_in_scratch[..fdim].iter()) {
            *f += d;
        }
        // Roughness head.
        if d_rough != 0.0 {
            field.rough_mlp.backward(
                &s.attrs.rough,
                &[d_rough],
                &mut sink.rough_mlp,
                &mut d_in_scratch,
            );
            for (f, d) in feat_grad.iter_mut().zip(d_in_scratch.iter()) {
                *f += d;
            }
        }
        // Normal head through the sign correction n' = -sign * n_raw/|n_raw|.
        if !s.n_flagged && d_ncorr_i != Vec3::ZERO {
            let m = s.att.normal_raw / s.n_raw_norm;
            let d_nraw = (d_ncorr_i - m * m.dot(d_ncorr_i)) * (-s.n_sign / s.n_raw_norm);
            field.normal_mlp.backward(
                &s.attrs.normal,
                &[d_nraw.x, d_nraw.y, d_nraw.z],
                &mut sink.normal_mlp,
                &mut d_in_scratch,
            );
            for (li, g) in field.normal_grids.iter().enumerate() {
                let off = li * field.cfg.normal_features;
                g.backward_sparse(
                    &s.attrs.normal_stencils[li],
                    &d_in_scratch[off..off + field.cfg.normal_features],
                    &mut sink.normal[li],
                );
            }
        }
    }

    // Weights -> alphas -> densities. Suffix sums give
    // d_alpha_k = T_k dw_k - (sum_{i>k} dw_i w_i) / (1 - alpha_k).
    let mut suffix = 0.0;
    let mut d_alpha = vec![0.0; n];
    for k in (0..n).rev() {
        let s = &state.samples[k];
        d_alpha[k] = s.trans * dw[k] - suffix / (1.0 - s.alpha);
        suffix += dw[k] * s.weight;
    }
    for k in 0..n {
        let s = &state.samples[k];
        if !s.density.inside {
            continue;
        }
        let tau_delta = s.density.density * s.delta;
        let d_tau = if tau_delta < TAU_DELTA_MAX {
            d_alpha[k] * s.delta * (1.0 - s.alpha)
        } else {
            0.0
        };
        let d_raw = d_tau * SceneField::density_derivative(s.density.raw, s.density.density);
        let feat = if s.active { &d_feat16[k * fdim..(k + 1) * fdim] } else { &[] as &[f64] };
        if d_raw == 0.0 && feat.iter().all(|&v| v == 0.0) {
            continue;
        }
        backward_density_query(field, &s.density, d_raw, feat, sink, &mut d_in_scratch);
    }
}

/// Backward through one density query: raw-output and feature-tail upstream
/// gradients into the density MLP and geo grids.
fn backward_density_query(
    field: &SceneField,
    trace: &DensityTrace,
    d_raw: f64,
    d_feat: &[f64],
    sink: &mut GradSink,
    d_in_scratch: &mut Vec<f64>,
) {
    let out_len = 1 + field.cfg.feature_dim;
    let mut d_out = vec![0.0; out_len];
    d_out[0] = d_raw;
    for (o, f) in d_out[1..].iter_mut().zip(d_feat.iter()) {
        *o = *f;
    }
    field
        .density_mlp
        .backward(&trace.mlp, &d_out, &mut sink.density_mlp, d_in_scratch);
    for (li, g) in field.geo_grids.iter().enumerate() {
        let off = li * field.cfg.geo_features;
        g.backward_sparse(
            &trace.stencils[li],
            &d_in_scratch[off..off + field.cfg.geo_features],
            &mut sink.geo[li],
        );
    }
}
