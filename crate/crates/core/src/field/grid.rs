//! Dense trilinear feature grids.
//!
//! Grids store `features` values per vertex over a `res^3` lattice mapped
//! onto the scene bounding box. Multi-resolution stacks concatenate their
//! interpolated features.

use crate::gde::Bbox;
use crate::geom::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid3 {
    pub res: usize,
    pub features: usize,
    pub data: Vec<f64>,
}

/// The 8 lattice corners and weights backing one interpolated lookup.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrilinearStencil {
    pub vertex: [usize; 8],
    pub weight: [f64; 8],
}

impl Grid3 {
    pub fn new(res: usize, features: usize) -> Self {
        assert!(res >= 2);
        Self { res, features, data: vec![0.0; res * res * res * features] }
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    fn vertex_index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.res + y) * self.res + x
    }

    /// Stencil for a position in normalized [0, 1]^3 coordinates. Positions
    /// outside are clamped to the boundary.
    pub fn stencil(&self, p01: Vec3) -> TrilinearStencil {
        let n = (self.res - 1) as f64;
        let gx = (p01.x.clamp(0.0, 1.0)) * n;
        let gy = (p01.y.clamp(0.0, 1.0)) * n;
        let gz = (p01.z.clamp(0.0, 1.0)) * n;
        let ix = (gx.floor() as usize).min(self.res - 2);
        let iy = (gy.floor() as usize).min(self.res - 2);
        let iz = (gz.floor() as usize).min(self.res - 2);
        let fx = gx - ix as f64;
        let fy = gy - iy as f64;
        let fz = gz - iz as f64;
        let mut st = TrilinearStencil::default();
        let mut k = 0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - fz } else { fz };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - fy } else { fy };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - fx } else { fx };
                    st.vertex[k] = self.vertex_index(ix + dx, iy + dy, iz + dz);
                    st.weight[k] = wx * wy * wz;
                    k += 1;
                }
            }
        }
        st
    }

    /// Interpolates features into `out[..features]`.
    pub fn sample_into(&self, st: &TrilinearStencil, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.features);
        out.fill(0.0);
        for k in 0..8 {
            let w = st.weight[k];
            if w == 0.0 {
                continue;
            }
            let base = st.vertex[k] * self.features;
            for (o, v) in out.iter_mut().zip(self.data[base..base + self.features].iter()) {
                *o += w * v;
            }
        }
    }

    /// Scatter-accumulates the gradient of one lookup as sparse entries.
    pub fn backward_sparse(
        &self,
        st: &TrilinearStencil,
        d_out: &[f64],
        sink: &mut Vec<(u32, f64)>,
    ) {
        debug_assert_eq!(d_out.len(), self.features);
        for k in 0..8 {
            let w = st.weight[k];
            if w == 0.0 {
                continue;
            }
            let base = st.vertex[k] * self.features;
            for (c, d) in d_out.iter().enumerate() {
                if *d != 0.0 {
                    sink.push(((base + c) as u32, w * d));
                }
            }
        }
    }
}

/// Maps a world position to normalized grid coordinates over `bbox`.
pub fn to_unit(bbox: &Bbox, p: Vec3) -> Vec3 {
    let span = bbox.max - bbox.min;
    Vec3::new(
        (p.x - bbox.min.x) / span.x,
        (p.y - bbox.min.y) / span.y,
        (p.z - bbox.min.z) / span.z,
    )
}
