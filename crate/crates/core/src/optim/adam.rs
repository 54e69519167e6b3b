//! Adam optimizer over flat parameter buffers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Adam state for one parameter buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam: params {} grads {} state {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.lr.to_le_bytes())?;
        w.write_all(&self.beta1.to_le_bytes())?;
        w.write_all(&self.beta2.to_le_bytes())?;
        w.write_all(&self.eps.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        write_f64_slice(w, &self.m)?;
        write_f64_slice(w, &self.v)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let lr = read_f64(r)?;
        let beta1 = read_f64(r)?;
        let beta2 = read_f64(r)?;
        let eps = read_f64(r)?;
        let mut step_le = [0u8; 8];
        r.read_exact(&mut step_le)?;
        let step = u64::from_le_bytes(step_le);
        let m = read_f64_slice(r)?;
        let v = read_f64_slice(r)?;
        if m.len() != v.len() {
            return Err(Error::malformed("adam state length mismatch"));
        }
        Ok(Self { lr, beta1, beta2, eps, step, m, v })
    }
}

pub(crate) fn write_f64_slice(w: &mut impl Write, data: &[f64]) -> Result<()> {
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64_slice(r: &mut impl Read) -> Result<Vec<f64>> {
    let mut len_le = [0u8; 8];
    r.read_exact(&mut len_le)?;
    let len = u64::from_le_bytes(len_le) as usize;
    if len > (1 << 32) {
        return Err(Error::malformed("implausible buffer length"));
    }
    let mut out = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Writes a parameter + optimizer checkpoint with the "OPT1" framing.
pub fn save_opt_checkpoint(path: &Path, blocks: &[(&[f64], &AdamState)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"OPT1")?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (params, state) in blocks {
        write_f64_slice(&mut w, params)?;
        state.write_to(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_opt_checkpoint`].
pub fn load_opt_checkpoint(path: &Path) -> Result<Vec<(Vec<f64>, AdamState)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"OPT1" {
        return Err(Error::malformed("bad checkpoint magic"));
    }
    let mut count_le = [0u8; 4];
    r.read_exact(&mut count_le)?;
    let count = u32::from_le_bytes(count_le) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let params = read_f64_slice(&mut r)?;
        let state = AdamState::read_from(&mut r)?;
        out.push((params, state));
    }
    Ok(out)
}
