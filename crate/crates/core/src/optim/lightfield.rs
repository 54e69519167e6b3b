//! Preconvolved incident light field: the initialization stage.
//!
//! Trains the Gaussian set and the specular decoder against Gaussian-blurred
//! input images so that decoder(encode(ray, rho)) matches the blurred color.
//! The result seeds the joint volumetric training stage.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gde::{encode, encode_grad, GaussianParams, GaussianSet};
use crate::geom::Ray;
use crate::rng;

use super::adam::{load_opt_checkpoint, save_opt_checkpoint, AdamState};
use super::dataset::RayDataset;
use super::mlp::{Activation, Mlp, MlpTrace};

/// MLP decoding an encoding vector into specular color, sigmoid outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecularDecoder {
    pub mlp: Mlp,
}

impl SpecularDecoder {
    pub fn new(encoding_len: usize, rng: &mut impl Rng) -> Self {
        Self {
            mlp: Mlp::new(&[encoding_len, 64, 64, 3], Activation::Sigmoid, rng),
        }
    }

    pub fn decode(&self, encoding: &[f64]) -> [f64; 3] {
        let out = self.mlp.forward(encoding);
        [out[0], out[1], out[2]]
    }

    /// Writes the decoder weights ("SDC1" framing) plus a JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"SDC1")?;
        super::adam::write_f64_slice(&mut w, &self.mlp.params)?;
        w.flush()?;
        let sidecar = serde_json::json!({ "sizes": self.mlp.sizes, "output": "sigmoid" });
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        use std::io::Read;
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let sizes: Vec<usize> = serde_json::from_value(sidecar["sizes"].clone())?;
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SDC1" {
            return Err(Error::malformed("bad decoder magic"));
        }
        let params = super::adam::read_f64_slice(&mut r)?;
        if params.len() != Mlp::param_count_for(&sizes) {
            return Err(Error::malformed("decoder parameter count mismatch"));
        }
        Ok(Self { mlp: Mlp { sizes, output_activation: Activation::Sigmoid, params } })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// `false` freezes the Gaussians and trains the decoder alone.
    pub optimize_gaussians: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2_000,
            batch_size: 4_096,
            lr: 1e-3,
            seed: 0,
            optimize_gaussians: true,
        }
    }
}

impl FitConfig {
    /// Full-size schedule from the reference setup (8k iterations of 25.6k
    /// rays); the default is the desk-scale shrink of it.
    pub fn paper_scale(mut self) -> Self {
        self.iterations = 8_000;
        self.batch_size = 25_600;
        self
    }
}

/// Incremental trainer so the CLI can checkpoint and resume exactly.
#[derive(Clone, Debug)]
pub struct InitTrainer {
    pub set: GaussianSet,
    pub decoder: SpecularDecoder,
    pub cfg: FitConfig,
    pub iter: u64,
    gauss_adam: AdamState,
    dec_adam: AdamState,
}

struct ChunkGrads {
    decoder: Vec<f64>,
    gaussians: Vec<f64>,
    loss_sum: f64,
}

impl InitTrainer {
    pub fn new(set: GaussianSet, decoder: SpecularDecoder, cfg: FitConfig) -> Self {
        let gauss_params = set.len() * GaussianParams::PARAM_COUNT;
        let dec_params = decoder.mlp.params.len();
        Self {
            set,
            decoder,
            cfg,
            iter: 0,
            gauss_adam: AdamState::new(gauss_params, cfg.lr),
            dec_adam: AdamState::new(dec_params, cfg.lr),
        }
    }

    pub fn predict(&self, ray: &Ray, rho: f64) -> [f64; 3] {
        self.decoder.decode(&encode(&self.set, ray, rho).values)
    }

    /// One minibatch step; returns the batch mean L1 loss.
    pub fn step(&mut self, dataset: &RayDataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut batch_rng = rng::stream(self.cfg.seed, &format!("init-batch-{}", self.iter));
        let indices: Vec<usize> = (0..self.cfg.batch_size)
            .map(|_| batch_rng.gen_range(0..dataset.len()))
            .collect();

        let dec_len = self.decoder.mlp.params.len();
        let gauss_len = self.set.len() * GaussianParams::PARAM_COUNT;
        let scale = 1.0 / (indices.len() as f64 * 3.0);

        // Fixed-size chunks keep the reduction order independent of the
        // worker count, so runs are bit-reproducible.
        const CHUNK: usize = 256;
        let chunks: Vec<ChunkGrads> = indices
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = ChunkGrads {
                    decoder: vec![0.0; dec_len],
                    gaussians: vec![0.0; gauss_len],
                    loss_sum: 0.0,
                };
                let mut trace = MlpTrace::default();
                let mut d_enc = Vec::new();
                for &idx in chunk {
                    let rec = &dataset.records[idx];
                    let enc = encode(&self.set, &rec.ray, rec.roughness);
                    self.decoder.mlp.forward_trace(&enc.values, &mut trace);
                    let mut d_out = [0.0; 3];
                    for c in 0..3 {
                        let r = trace.output[c] - rec.target[c];
                        grads.loss_sum += r.abs();
                        d_out[c] = r.signum() * scale;
                    }
                    self.decoder
                        .mlp
                        .backward(&trace, &d_out, &mut grads.decoder, &mut d_enc);
                    if self.cfg.optimize_gaussians {
                        let eg = encode_grad(&self.set, &rec.ray, rec.roughness, &d_enc);
                        for (i, gg) in eg.per_gaussian.iter().enumerate() {
                            gg.add_to_flat(
                                &mut grads.gaussians[i * GaussianParams::PARAM_COUNT
                                    ..(i + 1) * GaussianParams::PARAM_COUNT],
                            );
                        }
                    }
                }
                grads
            })
            .collect();

        let mut dec_grads = vec![0.0; dec_len];
        let mut gauss_grads = vec![0.0; gauss_len];
        let mut loss_sum = 0.0;
        for c in &chunks {
            for (a, b) in dec_grads.iter_mut().zip(c.decoder.iter()) {
                *a += b;
            }
            for (a, b) in gauss_grads.iter_mut().zip(c.gaussians.iter()) {
                *a += b;
            }
            loss_sum += c.loss_sum;
        }

        self.dec_adam.step(&mut self.decoder.mlp.params, &dec_grads)?;
        if self.cfg.optimize_gaussians {
            let mut flat = self.set.flatten();
            self.gauss_adam.step(&mut flat, &gauss_grads)?;
            // Quaternions renormalize on the way back in.
            self.set.unflatten_into(&flat);
        }
        self.iter += 1;
        Ok(loss_sum * scale)
    }

    /// Runs until `cfg.iterations`, appending per-iteration losses.
    pub fn run(&mut self, dataset: &RayDataset, losses: &mut Vec<f64>) -> Result<()> {
        while self.iter < self.cfg.iterations {
            let loss = self.step(dataset)?;
            losses.push(loss);
        }
        Ok(())
    }

    /// Checkpoint: Gaussian flat params + Adam, decoder params + Adam, and a
    /// JSON sidecar with counts, iteration and config.
    pub fn save(&self, path: &Path) -> Result<()> {
        let flat = self.set.flatten();
        save_opt_checkpoint(
            path,
            &[(&flat, &self.gauss_adam), (&self.decoder.mlp.params, &self.dec_adam)],
        )?;
        let sidecar = serde_json::json!({
            "kind": "init-stage",
            "iter": self.iter,
            "gaussians": self.set.len(),
            "decoder_sizes": self.decoder.mlp.sizes,
            "bbox": {
                "min": self.set.bbox.min.to_array(),
                "max": self.set.bbox.max.to_array(),
            },
            "config": self.cfg,
        });
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let blocks = load_opt_checkpoint(path)?;
        if blocks.len() != 2 {
            return Err(Error::malformed("init checkpoint needs 2 blocks"));
        }
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let n = sidecar["gaussians"].as_u64().ok_or_else(|| Error::malformed("missing count"))?
            as usize;
        let iter = sidecar["iter"].as_u64().unwrap_or(0);
        let cfg: FitConfig = serde_json::from_value(sidecar["config"].clone())?;
        let sizes: Vec<usize> = serde_json::from_value(sidecar["decoder_sizes"].clone())?;
        let bbox_min: [f64; 3] = serde_json::from_value(sidecar["bbox"]["min"].clone())?;
        let bbox_max: [f64; 3] = serde_json::from_value(sidecar["bbox"]["max"].clone())?;

        let (gauss_flat, gauss_adam) = blocks[0].clone();
        let (dec_params, dec_adam) = blocks[1].clone();
        if gauss_flat.len() != n * GaussianParams::PARAM_COUNT {
            return Err(Error::malformed("gaussian block length mismatch"));
        }
        let bbox = crate::gde::Bbox::new(
            crate::geom::Vec3::from_array(bbox_min),
            crate::geom::Vec3::from_array(bbox_max),
        );
        let mut set = GaussianSet::new(
            vec![GaussianParams::isotropic(crate::geom::Vec3::ZERO, 1.0); n],
            bbox,
        )?;
        set.unflatten_into(&gauss_flat);
        let mut mlp = Mlp {
            sizes,
            output_activation: Activation::Sigmoid,
            params: dec_params,
        };
        if mlp.params.len() != Mlp::param_count_for(&mlp.sizes) {
            return Err(Error::malformed("decoder block length mismatch"));
        }
        // Exact resume: quaternion components were saved post-normalization.
        mlp.params.shrink_to_fit();
        Ok(Self {
            set,
            decoder: SpecularDecoder { mlp },
            cfg,
            iter,
            gauss_adam,
            dec_adam,
        })
    }
}

/// Trains `set` and `dec` against the dataset; returns the loss curve.
pub fn fit_light_field(
    dataset: &RayDataset,
    set: GaussianSet,
    dec: SpecularDecoder,
    cfg: FitConfig,
) -> Result<(GaussianSet, SpecularDecoder, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut trainer = InitTrainer::new(set, dec, cfg);
    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    trainer.run(dataset, &mut losses)?;
    Ok((trainer.set, trainer.decoder, losses))
}
