//! Learnable 3D Gaussian parameters and their binary serialization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Quaternion, Vec3};

/// One learnable 3D Gaussian: position, inverse scale and rotation.
///
/// The inverse scale is stored as log values so the optimizer can treat the
/// components as unconstrained while the effective inverse scale stays
/// positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: Vec3,
    /// log of the inverse scale (psi = sigma^-1 = exp(log_inv_scale)).
    pub log_inv_scale: Vec3,
    pub rot: Quaternion,
}

impl GaussianParams {
    pub fn isotropic(mu: Vec3, sigma: f64) -> Self {
        debug_assert!(sigma > 0.0);
        let log_psi = -(sigma.ln());
        Self {
            mu,
            log_inv_scale: Vec3::splat(log_psi),
            rot: Quaternion::IDENTITY,
        }
    }

    /// Effective inverse scale psi.
    pub fn inv_scale(&self) -> Vec3 {
        self.log_inv_scale.exp_elem()
    }

    /// World-space scale sigma.
    pub fn scale(&self) -> Vec3 {
        Vec3::new(
            (-self.log_inv_scale.x).exp(),
            (-self.log_inv_scale.y).exp(),
            (-self.log_inv_scale.z).exp(),
        )
    }

    /// Number of scalar parameters per Gaussian (mu 3, log psi 3, quat 4).
    pub const PARAM_COUNT: usize = 10;

    pub fn to_flat(&self, out: &mut [f64]) {
        out[0..3].copy_from_slice(&self.mu.to_array());
        out[3..6].copy_from_slice(&self.log_inv_scale.to_array());
        out[6..10].copy_from_slice(&self.rot.to_array());
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self {
            mu: Vec3::new(flat[0], flat[1], flat[2]),
            log_inv_scale: Vec3::new(flat[3], flat[4], flat[5]),
            rot: Quaternion::new(flat[6], flat[7], flat[8], flat[9]),
        }
    }
}

/// Axis-aligned bounding box used for initialization metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bbox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn inflated(&self, fraction: f64) -> Bbox {
        let half = (self.max - self.min) * (0.5 * (1.0 + fraction));
        let c = self.center();
        Bbox::new(c - half, c + half)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Ordered set of Gaussians forming the encoding basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub gaussians: Vec<GaussianParams>,
    pub bbox: Bbox,
}

/// Default number of Gaussians.
pub const DEFAULT_GAUSSIAN_COUNT: usize = 256;

impl GaussianSet {
    pub fn new(gaussians: Vec<GaussianParams>, bbox: Bbox) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::invalid("gaussian set must hold at least one gaussian"));
        }
        Ok(Self { gaussians, bbox })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Pre-initialization default: centers uniform inside the bounding box
    /// inflated by 25%, isotropic sigma at 10% of the bbox diagonal,
    /// identity rotations.
    pub fn init_in_bbox(count: usize, bbox: Bbox, rng: &mut impl Rng) -> Self {
        let region = bbox.inflated(0.25);
        let sigma = 0.1 * bbox.diagonal();
        let gaussians = (0..count)
            .map(|_| {
                let p = Vec3::new(
                    rng.gen_range(region.min.x..=region.max.x),
                    rng.gen_range(region.min.y..=region.max.y),
                    rng.gen_range(region.min.z..=region.max.z),
                );
                GaussianParams::isotropic(p, sigma)
            })
            .collect();
        Self { gaussians, bbox }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * GaussianParams::PARAM_COUNT];
        for (i, g) in self.gaussians.iter().enumerate() {
            g.to_flat(&mut out[i * GaussianParams::PARAM_COUNT..(i + 1) * GaussianParams::PARAM_COUNT]);
        }
        out
    }

    /// Restores parameters from a flat buffer, renormalizing quaternions.
    pub fn unflatten_into(&mut self, flat: &[f64]) {
        debug_assert_eq!(flat.len(), self.len() * GaussianParams::PARAM_COUNT);
        for (i, g) in self.gaussians.iter_mut().enumerate() {
            let mut p = GaussianParams::from_flat(
                &flat[i * GaussianParams::PARAM_COUNT..(i + 1) * GaussianParams::PARAM_COUNT],
            );
            p.rot = p.rot.normalized();
            *g = p;
        }
    }

    /// Writes the versioned binary blob plus a JSON sidecar
    /// (`<path>.json`) with the count and bbox.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"GDE1")?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for g in &self.gaussians {
            for v in g.mu.to_array() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            for v in g.log_inv_scale.to_array() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            for v in g.rot.to_array() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        let sidecar = serde_json::json!({
            "count": self.len(),
            "bbox": { "min": self.bbox.min.to_array(), "max": self.bbox.max.to_array() },
        });
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GDE1" {
            return Err(Error::malformed("bad gaussian blob magic"));
        }
        let mut count_le = [0u8; 4];
        r.read_exact(&mut count_le)?;
        let count = u32::from_le_bytes(count_le) as usize;
        let read_f32 = |r: &mut BufReader<File>| -> Result<f64> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(f32::from_le_bytes(b) as f64)
        };
        let mut gaussians = Vec::with_capacity(count);
        for _ in 0..count {
            let mu = Vec3::new(read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?);
            let lis = Vec3::new(read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?);
            let rot = Quaternion::new(
                read_f32(&mut r)?,
                read_f32(&mut r)?,
                read_f32(&mut r)?,
                read_f32(&mut r)?,
            );
            gaussians.push(GaussianParams { mu, log_inv_scale: lis, rot });
        }
        let sidecar_path = path.with_extension("json");
        let bbox = if sidecar_path.exists() {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
            let arr = |k: &str| -> Vec3 {
                let a = &v["bbox"][k];
                Vec3::new(
                    a[0].as_f64().unwrap_or(0.0),
                    a[1].as_f64().unwrap_or(0.0),
                    a[2].as_f64().unwrap_or(0.0),
                )
            };
            Bbox::new(arr("min"), arr("max"))
        } else {
            Bbox::new(Vec3::splat(-1.0), Vec3::splat(1.0))
        };
        GaussianSet::new(gaussians, bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn inv_scale_positive() {
        let g = GaussianParams::isotropic(Vec3::ZERO, 0.5);
        let psi = g.inv_scale();
        assert!(psi.x > 0.0 && psi.y > 0.0 && psi.z > 0.0);
        assert!((psi.x - 2.0).abs() < 1e-12);
        assert!((g.scale().x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_round_trip() {
        let g = GaussianParams {
            mu: Vec3::new(1.0, -2.0, 3.0),
            log_inv_scale: Vec3::new(0.1, 0.2, -0.3),
            rot: Quaternion::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.7),
        };
        let mut flat = [0.0; 10];
        g.to_flat(&mut flat);
        assert_eq!(GaussianParams::from_flat(&flat), g);
    }

    #[test]
    fn blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.gde");
        let bbox = Bbox::new(Vec3::splat(-2.0), Vec3::splat(2.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let set = GaussianSet::init_in_bbox(16, bbox, &mut rng);
        set.save(&path).unwrap();
        let back = GaussianSet::load(&path).unwrap();
        assert_eq!(back.len(), 16);
        for (a, b) in set.gaussians.iter().zip(back.gaussians.iter()) {
            assert!((a.mu - b.mu).norm() < 1e-6);
            assert!((a.log_inv_scale - b.log_inv_scale).norm() < 1e-6);
        }
        assert!((back.bbox.min - bbox.min).norm() < 1e-12);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(GaussianSet::new(vec![], Bbox::new(Vec3::ZERO, Vec3::ONE)).is_err());
    }
}
