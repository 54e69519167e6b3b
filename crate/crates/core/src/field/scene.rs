//! Trainable volumetric scene field.
//!
//! Multi-resolution dense feature grids feed five MLP heads: density (with a
//! 16-dim feature tail), diffuse, tint (which also sees the SH-encoded view
//! direction), roughness, and a normal head on its own coarser grid stack.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gde::Bbox;
use crate::geom::{sh_basis, Vec3};
use crate::optim::adam::{read_f64_slice, write_f64_slice};
use crate::optim::{Activation, Mlp, MlpTrace};

use super::grid::{to_unit, Grid3, TrilinearStencil};

/// Raw clamp bound inside the exponential density activation.
const DENSITY_CLAMP: f64 = 30.0;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldConfig {
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub geo_res: Vec<usize>,
    pub geo_features: usize,
    pub normal_res: Vec<usize>,
    pub normal_features: usize,
    /// Density feature tail consumed by the attribute heads.
    pub feature_dim: usize,
    /// SH degree of the view-direction encoding feeding the tint head.
    pub sh_degree: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            bbox_min: [-1.0; 3],
            bbox_max: [1.0; 3],
            geo_res: vec![16, 32, 64],
            geo_features: 4,
            normal_res: vec![8, 16],
            normal_features: 4,
            feature_dim: 16,
            sh_degree: 3,
        }
    }
}

impl FieldConfig {
    pub fn bbox(&self) -> Bbox {
        Bbox::new(Vec3::from_array(self.bbox_min), Vec3::from_array(self.bbox_max))
    }

    pub fn geo_feat_len(&self) -> usize {
        self.geo_res.len() * self.geo_features
    }

    pub fn normal_feat_len(&self) -> usize {
        self.normal_res.len() * self.normal_features
    }

    pub fn sh_len(&self) -> usize {
        (self.sh_degree + 1) * (self.sh_degree + 1)
    }

    /// Tiny configuration for gradient checks.
    pub fn tiny(bbox: Bbox) -> Self {
        Self {
            bbox_min: bbox.min.to_array(),
            bbox_max: bbox.max.to_array(),
            geo_res: vec![8],
            geo_features: 4,
            normal_res: vec![8],
            normal_features: 4,
            feature_dim: 16,
            sh_degree: 3,
        }
    }
}

/// Per-sample outputs of the field.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleAttributes {
    pub density: f64,
    pub diffuse: Vec3,
    pub tint: Vec3,
    pub roughness: f64,
    /// Raw (pre-normalization, pre-correction) normal.
    pub normal_raw: Vec3,
}

#[derive(Clone, Debug)]
pub struct SceneField {
    pub cfg: FieldConfig,
    pub geo_grids: Vec<Grid3>,
    pub normal_grids: Vec<Grid3>,
    pub density_mlp: Mlp,
    pub diffuse_mlp: Mlp,
    pub tint_mlp: Mlp,
    pub rough_mlp: Mlp,
    pub normal_mlp: Mlp,
}

/// Reusable per-sample trace buffers for the density path.
#[derive(Clone, Debug, Default)]
pub struct DensityTrace {
    pub stencils: Vec<TrilinearStencil>,
    pub geo_feats: Vec<f64>,
    pub mlp: MlpTrace,
    /// Raw (pre-exponential) density output.
    pub raw: f64,
    pub density: f64,
    pub inside: bool,
}

/// Trace for the attribute heads of one sample.
#[derive(Clone, Debug, Default)]
pub struct AttributeTrace {
    pub diffuse: MlpTrace,
    pub tint: MlpTrace,
    pub rough: MlpTrace,
    pub normal: MlpTrace,
    pub normal_stencils: Vec<TrilinearStencil>,
    pub normal_feats: Vec<f64>,
    pub tint_input: Vec<f64>,
}

impl SceneField {
    pub fn new(cfg: FieldConfig, rng: &mut impl Rng) -> Self {
        let geo_grids = cfg
            .geo_res
            .iter()
            .map(|&r| {
                let mut g = Grid3::new(r, cfg.geo_features);
                // Small noise breaks symmetry; zero works too but converges
                // slower.
                for v in g.data.iter_mut() {
                    *v = rng.gen_range(-1e-3..1e-3);
                }
                g
            })
            .collect();
        let normal_grids = cfg
            .normal_res
            .iter()
            .map(|&r| {
                let mut g = Grid3::new(r, cfg.normal_features);
                for v in g.data.iter_mut() {
                    *v = rng.gen_range(-1e-3..1e-3);
                }
                g
            })
            .collect();
        let fdim = cfg.feature_dim;
        let density_mlp = Mlp::new(&[cfg.geo_feat_len(), 64, 1 + fdim], Activation::None, rng);
        let diffuse_mlp = Mlp::new(&[fdim, 64, 64, 3], Activation::Sigmoid, rng);
        let tint_mlp = Mlp::new(&[fdim + cfg.sh_len(), 64, 64, 3], Activation::Sigmoid, rng);
        let rough_mlp = Mlp::new(&[fdim, 64, 64, 1], Activation::Softplus, rng);
        let normal_mlp = Mlp::new(&[cfg.normal_feat_len(), 64, 3], Activation::None, rng);
        Self {
            cfg,
            geo_grids,
            normal_grids,
            density_mlp,
            diffuse_mlp,
            tint_mlp,
            rough_mlp,
            normal_mlp,
        }
    }

    pub fn bbox(&self) -> Bbox {
        self.cfg.bbox()
    }

    /// Density and feature tail with full trace; zero density outside bbox.
    pub fn density_trace(&self, x: Vec3, trace: &mut DensityTrace) {
        let bbox = self.bbox();
        trace.inside = bbox.contains(x);
        if !trace.inside {
            trace.density = 0.0;
            trace.raw = 0.0;
            return;
        }
        let p01 = to_unit(&bbox, x);
        trace.stencils.resize(self.geo_grids.len(), TrilinearStencil::default());
        trace.geo_feats.resize(self.cfg.geo_feat_len(), 0.0);
        for (li, g) in self.geo_grids.iter().enumerate() {
            trace.stencils[li] = g.stencil(p01);
            let off = li * self.cfg.geo_features;
            g.sample_into(
                &trace.stencils[li],
                &mut trace.geo_feats[off..off + self.cfg.geo_features],
            );
        }
        self.density_mlp.forward_trace(&trace.geo_feats, &mut trace.mlp);
        trace.raw = trace.mlp.output[0];
        trace.density = trace.raw.clamp(-DENSITY_CLAMP, DENSITY_CLAMP).exp();
    }

    /// Plain density lookup (no trace), used by the coarse sampling pass and
    /// the numerical density gradient.
    pub fn density_at(&self, x: Vec3, scratch: &mut DensityTrace) -> f64 {
        self.density_trace(x, scratch);
        scratch.density
    }

    /// Derivative of the density w.r.t. the raw MLP output.
    pub fn density_derivative(raw: f64, density: f64) -> f64 {
        if (-DENSITY_CLAMP..=DENSITY_CLAMP).contains(&raw) {
            density
        } else {
            0.0
        }
    }

    /// Attribute heads for an already-traced sample. `sh_view` is the SH
    /// encoding of the ray direction.
    pub fn attributes_trace(
        &self,
        x: Vec3,
        density: &DensityTrace,
        sh_view: &[f64],
        out: &mut AttributeTrace,
    ) -> SampleAttributes {
        debug_assert!(density.inside);
        let feat = &density.mlp.output[1..1 + self.cfg.feature_dim];
        self.diffuse_mlp.forward_trace(feat, &mut out.diffuse);
        out.tint_input.clear();
        out.tint_input.extend_from_slice(feat);
        out.tint_input.extend_from_slice(sh_view);
        self.tint_mlp.forward_trace(&out.tint_input, &mut out.tint);
        self.rough_mlp.forward_trace(feat, &mut out.rough);

        let p01 = to_unit(&self.bbox(), x);
        out.normal_stencils
            .resize(self.normal_grids.len(), TrilinearStencil::default());
        out.normal_feats.resize(self.cfg.normal_feat_len(), 0.0);
        for (li, g) in self.normal_grids.iter().enumerate() {
            out.normal_stencils[li] = g.stencil(p01);
            let off = li * self.cfg.normal_features;
            g.sample_into(
                &out.normal_stencils[li],
                &mut out.normal_feats[off..off + self.cfg.normal_features],
            );
        }
        self.normal_mlp.forward_trace(&out.normal_feats, &mut out.normal);

        SampleAttributes {
            density: density.density,
            diffuse: Vec3::new(out.diffuse.output[0], out.diffuse.output[1], out.diffuse.output[2]),
            tint: Vec3::new(out.tint.output[0], out.tint.output[1], out.tint.output[2]),
            roughness: out.rough.output[0],
            normal_raw: Vec3::new(out.normal.output[0], out.normal.output[1], out.normal.output[2]),
        }
    }

    /// One-shot field probe (the public sampling operation).
    pub fn sample_field(&self, x: Vec3, view_dir: Vec3) -> SampleAttributes {
        let mut dt = DensityTrace::default();
        self.density_trace(x, &mut dt);
        if !dt.inside {
            return SampleAttributes::default();
        }
        let sh = sh_basis(view_dir, self.cfg.sh_degree).expect("sh degree bounded by config");
        let mut at = AttributeTrace::default();
        self.attributes_trace(x, &dt, &sh, &mut at)
    }

    /// Parameter blocks in checkpoint order: geo grids, normal grids, then
    /// the five heads.
    pub fn param_block_lens(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.geo_grids.iter().map(|g| g.data.len()).collect();
        v.extend(self.normal_grids.iter().map(|g| g.data.len()));
        v.extend([
            self.density_mlp.params.len(),
            self.diffuse_mlp.params.len(),
            self.tint_mlp.params.len(),
            self.rough_mlp.params.len(),
            self.normal_mlp.params.len(),
        ]);
        v
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.geo_grids.iter().map(|g| g.data.as_slice()).collect();
        v.extend(self.normal_grids.iter().map(|g| g.data.as_slice()));
        v.extend([
            self.density_mlp.params.as_slice(),
            self.diffuse_mlp.params.as_slice(),
            self.tint_mlp.params.as_slice(),
            self.rough_mlp.params.as_slice(),
            self.normal_mlp.params.as_slice(),
        ]);
        v
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> =
            self.geo_grids.iter_mut().map(|g| &mut g.data).collect();
        v.extend(self.normal_grids.iter_mut().map(|g| &mut g.data));
        v.push(&mut self.density_mlp.params);
        v.push(&mut self.diffuse_mlp.params);
        v.push(&mut self.tint_mlp.params);
        v.push(&mut self.rough_mlp.params);
        v.push(&mut self.normal_mlp.params);
        v
    }

    /// Writes grids and head weights with the "FLD1" framing plus a JSON
    /// sidecar describing resolutions and activations.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"FLD1")?;
        let blocks = self.param_blocks();
        w.write_all(&(blocks.len() as u32).to_le_bytes())?;
        for b in blocks {
            write_f64_slice(&mut w, b)?;
        }
        w.flush()?;
        let sidecar = serde_json::json!({
            "kind": "scene-field",
            "config": self.cfg,
            "activations": {
                "density": "exp",
                "diffuse": "sigmoid",
                "tint": "sigmoid",
                "roughness": "softplus",
                "normal": "none",
            },
        });
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let cfg: FieldConfig = serde_json::from_value(sidecar["config"].clone())?;
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"FLD1" {
            return Err(Error::malformed("bad field checkpoint magic"));
        }
        let mut count_le = [0u8; 4];
        r.read_exact(&mut count_le)?;
        let count = u32::from_le_bytes(count_le) as usize;
        let mut rng = crate::rng::stream(0, "field-load-unused");
        let mut field = SceneField::new(cfg, &mut rng);
        let expected = field.param_block_lens();
        if count != expected.len() {
            return Err(Error::malformed("field checkpoint block count mismatch"));
        }
        let mut blocks = Vec::with_capacity(count);
        for len in expected {
            let b = read_f64_slice(&mut r)?;
            if b.len() != len {
                return Err(Error::malformed("field checkpoint block length mismatch"));
            }
            blocks.push(b);
        }
        for (dst, src) in field.param_blocks_mut().into_iter().zip(blocks) {
            *dst = src;
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny_field(seed: u64) -> SceneField {
        let cfg = FieldConfig::tiny(Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0)));
        SceneField::new(cfg, &mut rng::stream(seed, "field-test"))
    }

    #[test]
    fn outside_bbox_is_empty() {
        let f = tiny_field(0);
        let s = f.sample_field(Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(s.density, 0.0);
    }

    #[test]
    fn zero_grids_give_constant_density() {
        let mut f = tiny_field(1);
        for g in f.geo_grids.iter_mut() {
            g.data.fill(0.0);
        }
        let d = Vec3::new(0.0, 0.0, 1.0);
        let a = f.sample_field(Vec3::new(0.1, 0.2, -0.3), d);
        let b = f.sample_field(Vec3::new(-0.7, 0.5, 0.9), d);
        assert!((a.density - b.density).abs() < 1e-12);
        assert!(a.density > 0.0);
    }

    #[test]
    fn attribute_ranges() {
        let f = tiny_field(2);
        let s = f.sample_field(Vec3::new(0.3, -0.2, 0.1), Vec3::new(0.0, 1.0, 0.0));
        for v in [s.diffuse.x, s.diffuse.y, s.diffuse.z, s.tint.x, s.tint.y, s.tint.z] {
            assert!(v > 0.0 && v < 1.0);
        }
        assert!(s.roughness > 0.0);
        assert!(s.density >= 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.fld1");
        let f = tiny_field(3);
        f.save(&path).unwrap();
        let g = SceneField::load(&path).unwrap();
        assert_eq!(f.cfg, g.cfg);
        for (a, b) in f.param_blocks().iter().zip(g.param_blocks().iter()) {
            assert_eq!(a, b);
        }
        let p = Vec3::new(0.2, 0.4, -0.6);
        let d = Vec3::new(0.0, 0.0, 1.0);
        let sa = f.sample_field(p, d);
        let sb = g.sample_field(p, d);
        assert_eq!(sa.density, sb.density);
        assert_eq!(sa.diffuse, sb.diffuse);
    }
}
