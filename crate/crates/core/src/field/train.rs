//! Joint training of the scene field, the Gaussian encoding and the
//! specular decoder.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gde::{GaussianParams, GaussianSet};
use crate::geom::{metrics, Camera, ImageBuffer, Vec3};
use crate::optim::{AdamState, LossWeights, SpecularDecoder};
use crate::rng;

use super::render::{backward_ray, trace_ray, GradSink, RayState, RayUpstream, RenderParams};
use super::scene::SceneField;

/// One calibrated view with its image and (optionally) a view-space normal
/// map in [-1, 1] coordinates.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub camera: Camera,
    pub image: ImageBuffer,
    pub normal_view: Option<ImageBuffer>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainSet {
    pub train: Vec<TrainView>,
    pub test: Vec<TrainView>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub optimize_gaussians: bool,
    /// Zero the tint path: color reduces to the diffuse component.
    pub diffuse_only: bool,
    pub validate_every: u64,
    /// Downscale factor for validation renders.
    pub val_scale: usize,
    pub n_coarse: usize,
    pub n_importance: usize,
    pub gate_eps: f64,
    pub t_near: f64,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2_000,
            batch_size: 512,
            lr: 5e-3,
            seed: 0,
            weights: LossWeights { mono_stop_iter: 80, ..Default::default() },
            optimize_gaussians: true,
            diffuse_only: false,
            validate_every: 500,
            val_scale: 4,
            n_coarse: 24,
            n_importance: 16,
            gate_eps: 1e-4,
            t_near: 0.05,
            background: [0.0; 3],
        }
    }
}

impl TrainConfig {
    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            n_coarse: self.n_coarse,
            n_importance: self.n_importance,
            t_near_min: self.t_near,
            background: Vec3::from_array(self.background),
            gate_eps: self.gate_eps,
            opacity_threshold: 0.01,
        }
    }
}

/// Per-iteration training record.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: u64,
    pub total: f64,
    pub l_color: f64,
    pub l_dist: f64,
    pub l_mono: f64,
    pub l_norm: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub iters: Vec<IterRecord>,
    /// (iteration, validation PSNR dB).
    pub val_psnr: Vec<(u64, f64)>,
}

pub struct FieldTrainer {
    pub field: SceneField,
    pub set: GaussianSet,
    pub decoder: SpecularDecoder,
    pub cfg: TrainConfig,
    pub iter: u64,
    field_adam: Vec<AdamState>,
    gauss_adam: AdamState,
    dec_adam: AdamState,
}

struct ChunkResult {
    sink: GradSink,
    l_color: f64,
    l_dist: f64,
    l_mono: f64,
    l_norm: f64,
}

impl FieldTrainer {
    pub fn new(field: SceneField, set: GaussianSet, decoder: SpecularDecoder, cfg: TrainConfig) -> Self {
        let field_adam = field
            .param_block_lens()
            .iter()
            .map(|&len| AdamState::new(len, cfg.lr))
            .collect();
        let gauss_adam = AdamState::new(set.len() * GaussianParams::PARAM_COUNT, cfg.lr);
        let dec_adam = AdamState::new(decoder.mlp.params.len(), cfg.lr);
        Self { field, set, decoder, cfg, iter: 0, field_adam, gauss_adam, dec_adam }
    }

    /// One minibatch step over randomly sampled pixels of the train views.
    pub fn step(&mut self, data: &TrainSet) -> Result<IterRecord> {
        if data.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let iter = self.iter;
        let weights = self.cfg.weights;
        let mono_w = weights.mono_weight(iter);
        if mono_w > 0.0 && data.train.iter().any(|v| v.normal_view.is_none()) {
            return Err(Error::invalid(
                "monocular normal loss enabled but a train view has no normal map",
            ));
        }
        let params = self.cfg.render_params();
        let batch = self.cfg.batch_size;
        let mut batch_rng = rng::stream(self.cfg.seed, &format!("train-batch-{iter}"));
        let picks: Vec<(usize, usize, usize, u64)> = (0..batch)
            .map(|k| {
                let v = batch_rng.gen_range(0..data.train.len());
                let view = &data.train[v];
                let x = batch_rng.gen_range(0..view.image.width);
                let y = batch_rng.gen_range(0..view.image.height);
                (v, x, y, k as u64)
            })
            .collect();

        let inv_b = 1.0 / batch as f64;
        let want_norm = weights.lambda_norm > 0.0;
        const CHUNK: usize = 32;
        let chunks: Vec<ChunkResult> = picks
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut res = ChunkResult {
                    sink: GradSink::new(&self.field, &self.set, &self.decoder),
                    l_color: 0.0,
                    l_dist: 0.0,
                    l_mono: 0.0,
                    l_norm: 0.0,
                };
                let mut state = RayState::default();
                for &(v, x, y, k) in chunk {
                    let view = &data.train[v];
                    if !view.image.is_valid(x, y) {
                        continue;
                    }
                    let ray = view.camera.pixel_ray(x, y);
                    let mut jit = rng::stream2(self.cfg.seed, "train-jitter", iter, k);
                    let mut jitter_fn = move || jit.gen::<f64>();
                    let mut jitter: Option<&mut dyn FnMut() -> f64> = Some(&mut jitter_fn);
                    let spec = if self.cfg.diffuse_only {
                        None
                    } else {
                        Some((&self.set, &self.decoder))
                    };
                    trace_ray(
                        &self.field,
                        spec,
                        &ray,
                        &params,
                        0.0,
                        &mut jitter,
                        want_norm,
                        &mut state,
                    );

                    let gt = view.image.pixel_vec3(x, y);
                    let diff = state.color - gt;
                    res.l_color +=
                        (diff.x.abs() + diff.y.abs() + diff.z.abs()) / 3.0 * inv_b;
                    let d_color = Vec3::new(
                        diff.x.signum(),
                        diff.y.signum(),
                        diff.z.signum(),
                    ) * (inv_b / 3.0);

                    let mut up = RayUpstream {
                        d_color,
                        d_normal: Vec3::ZERO,
                        dist_scale: weights.lambda_dist * inv_b,
                        norm_scale: weights.lambda_norm * inv_b,
                        ..Default::default()
                    };

                    if state.hit {
                        if weights.lambda_dist > 0.0 {
                            let (s_mids, s_ds) = state.normalized_spans();
                            let w: Vec<f64> = state.samples[..state.n_samples]
                                .iter()
                                .map(|s| s.weight)
                                .collect();
                            res.l_dist += crate::optim::losses::loss_distortion(
                                &w, &s_mids, &s_ds,
                            ) * inv_b;
                        }
                        res.l_norm += state.l_norm * inv_b;
                        if mono_w > 0.0
                            && state.opacity >= params.opacity_threshold
                            && state.normal != Vec3::ZERO
                        {
                            let nm = view
                                .normal_view
                                .as_ref()
                                .expect("checked above")
                                .pixel_vec3(x, y);
                            let target = view.camera.normal_to_world(nm);
                            let e = state.normal - target;
                            res.l_mono += e.norm_sq() * inv_b;
                            up.d_normal = e * (2.0 * mono_w * inv_b);
                        }
                    }
                    backward_ray(
                        &self.field,
                        &self.set,
                        &self.decoder,
                        &state,
                        &up,
                        &params,
                        &mut res.sink,
                    );
                }
                res
            })
            .collect();

        // Deterministic merge in chunk order.
        let mut total_sink = GradSink::new(&self.field, &self.set, &self.decoder);
        let mut geo_dense: Vec<Vec<f64>> = self
            .field
            .geo_grids
            .iter()
            .map(|g| vec![0.0; g.data.len()])
            .collect();
        let mut normal_dense: Vec<Vec<f64>> = self
            .field
            .normal_grids
            .iter()
            .map(|g| vec![0.0; g.data.len()])
            .collect();
        let mut rec = IterRecord {
            iter,
            total: 0.0,
            l_color: 0.0,
            l_dist: 0.0,
            l_mono: 0.0,
            l_norm: 0.0,
        };
        for c in &chunks {
            for (li, entries) in c.sink.geo.iter().enumerate() {
                for &(idx, v) in entries {
                    geo_dense[li][idx as usize] += v;
                }
            }
            for (li, entries) in c.sink.normal.iter().enumerate() {
                for &(idx, v) in entries {
                    normal_dense[li][idx as usize] += v;
                }
            }
            add_assign(&mut total_sink.density_mlp, &c.sink.density_mlp);
            add_assign(&mut total_sink.diffuse_mlp, &c.sink.diffuse_mlp);
            add_assign(&mut total_sink.tint_mlp, &c.sink.tint_mlp);
            add_assign(&mut total_sink.rough_mlp, &c.sink.rough_mlp);
            add_assign(&mut total_sink.normal_mlp, &c.sink.normal_mlp);
            add_assign(&mut total_sink.gaussians, &c.sink.gaussians);
            add_assign(&mut total_sink.decoder, &c.sink.decoder);
            rec.l_color += c.l_color;
            rec.l_dist += c.l_dist;
            rec.l_mono += c.l_mono;
            rec.l_norm += c.l_norm;
        }
        rec.total = rec.l_color
            + weights.lambda_dist * rec.l_dist
            + mono_w * rec.l_mono
            + weights.lambda_norm * rec.l_norm;

        // Per-block Adam updates in the fixed block order.
        let n_geo = self.field.geo_grids.len();
        let n_norm = self.field.normal_grids.len();
        let grads_by_block: Vec<Vec<f64>> = geo_dense
            .into_iter()
            .chain(normal_dense)
            .chain([
                total_sink.density_mlp,
                total_sink.diffuse_mlp,
                total_sink.tint_mlp,
                total_sink.rough_mlp,
                total_sink.normal_mlp,
            ])
            .collect();
        debug_assert_eq!(grads_by_block.len(), n_geo + n_norm + 5);
        for ((block, adam), grads) in self
            .field
            .param_blocks_mut()
            .into_iter()
            .zip(self.field_adam.iter_mut())
            .zip(grads_by_block.iter())
        {
            adam.step(block, grads)?;
        }
        if self.cfg.optimize_gaussians && !self.cfg.diffuse_only {
            let mut flat = self.set.flatten();
            self.gauss_adam.step(&mut flat, &total_sink.gaussians)?;
            self.set.unflatten_into(&flat);
        }
        if !self.cfg.diffuse_only {
            self.dec_adam.step(&mut self.decoder.mlp.params, &total_sink.decoder)?;
        }
        self.iter += 1;
        Ok(rec)
    }

    /// Renders a view at `1/scale` resolution with deterministic sampling.
    pub fn render_view(&self, camera: &Camera, scale: usize, roughness_offset: f64) -> ImageBuffer {
        render_view(
            &self.field,
            &self.set,
            &self.decoder,
            camera,
            scale,
            roughness_offset,
            &self.cfg.render_params(),
            self.cfg.diffuse_only,
        )
    }

    /// Mean PSNR of the test views against their downscaled ground truth.
    pub fn validation_psnr(&self, data: &TrainSet) -> Result<f64> {
        if data.test.is_empty() {
            return Err(Error::invalid("no test views"));
        }
        let mut acc = 0.0;
        for view in &data.test {
            let rendered = self.render_view(&view.camera, self.cfg.val_scale, 0.0);
            let gt = view.image.downscale(self.cfg.val_scale);
            acc += metrics::psnr(&rendered, &gt)?;
        }
        Ok(acc / data.test.len() as f64)
    }

    pub fn run(&mut self, data: &TrainSet, metrics_out: &mut TrainMetrics) -> Result<()> {
        while self.iter < self.cfg.iterations {
            let rec = self.step(data)?;
            let done = self.iter;
            metrics_out.iters.push(rec);
            if self.cfg.validate_every > 0
                && (done % self.cfg.validate_every == 0 || done == self.cfg.iterations)
                && !data.test.is_empty()
            {
                let psnr = self.validation_psnr(data)?;
                metrics_out.val_psnr.push((done, psnr));
            }
        }
        Ok(())
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src.iter()) {
        *a += b;
    }
}

/// Deterministic full-view render used for validation and the render
/// command.
#[allow(clippy::too_many_arguments)]
pub fn render_view(
    field: &SceneField,
    set: &GaussianSet,
    decoder: &SpecularDecoder,
    camera: &Camera,
    scale: usize,
    roughness_offset: f64,
    params: &RenderParams,
    diffuse_only: bool,
) -> ImageBuffer {
    let cam = if scale > 1 { camera.scaled(1.0 / scale as f64) } else { camera.clone() };
    let mut out = ImageBuffer::new(cam.width, cam.height, 3);
    let rows: Vec<Vec<f64>> = (0..cam.height)
        .into_par_iter()
        .map(|y| {
            let mut state = RayState::default();
            let mut row = vec![0.0; cam.width * 3];
            for x in 0..cam.width {
                let ray = cam.pixel_ray(x, y);
                let spec = if diffuse_only { None } else { Some((set, decoder)) };
                trace_ray(field, spec, &ray, params, roughness_offset, &mut None, false, &mut state);
                row[x * 3] = state.color.x;
                row[x * 3 + 1] = state.color.y;
                row[x * 3 + 2] = state.color.z;
            }
            row
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for x in 0..cam.width {
            out.set(x, y, 0, row[x * 3]);
            out.set(x, y, 1, row[x * 3 + 1]);
            out.set(x, y, 2, row[x * 3 + 2]);
        }
    }
    out
}

/// Renders the full buffer decomposition of a view.
pub fn render_view_buffers(
    field: &SceneField,
    set: &GaussianSet,
    decoder: &SpecularDecoder,
    camera: &Camera,
    roughness_offset: f64,
    params: &RenderParams,
) -> RenderBuffers {
    let mut bufs = RenderBuffers::new(camera.width, camera.height);
    let rows: Vec<Vec<super::render::RenderOutput>> = (0..camera.height)
        .into_par_iter()
        .map(|y| {
            let mut state = RayState::default();
            (0..camera.width)
                .map(|x| {
                    let ray = camera.pixel_ray(x, y);
                    trace_ray(
                        field,
                        Some((set, decoder)),
                        &ray,
                        params,
                        roughness_offset,
                        &mut None,
                        false,
                        &mut state,
                    );
                    let mut o = state.to_output();
                    o.weights.clear();
                    o.t_mids.clear();
                    o.deltas.clear();
                    o
                })
                .collect()
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for (x, o) in row.into_iter().enumerate() {
            bufs.final_color.set_pixel_vec3(x, y, o.color);
            bufs.diffuse.set_pixel_vec3(x, y, o.diffuse);
            bufs.specular.set_pixel_vec3(x, y, o.specular);
            bufs.tint.set_pixel_vec3(x, y, o.tint);
            bufs.roughness.set(x, y, 0, o.roughness);
            bufs.normal.set_pixel_vec3(x, y, o.normal);
            bufs.depth.set(x, y, 0, o.depth);
        }
    }
    bufs
}

/// Per-buffer render outputs of one view.
pub struct RenderBuffers {
    pub final_color: ImageBuffer,
    pub diffuse: ImageBuffer,
    pub specular: ImageBuffer,
    pub tint: ImageBuffer,
    pub roughness: ImageBuffer,
    pub normal: ImageBuffer,
    pub depth: ImageBuffer,
}

impl RenderBuffers {
    fn new(w: usize, h: usize) -> Self {
        Self {
            final_color: ImageBuffer::new(w, h, 3),
            diffuse: ImageBuffer::new(w, h, 3),
            specular: ImageBuffer::new(w, h, 3),
            tint: ImageBuffer::new(w, h, 3),
            roughness: ImageBuffer::new(w, h, 1),
            normal: ImageBuffer::new(w, h, 3),
            depth: ImageBuffer::new(w, h, 1),
        }
    }
}
