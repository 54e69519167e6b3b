//! Small fully connected networks with hand-rolled backward passes.
//!
//! Hidden layers use the rectifier; the output activation is configurable.
//! Parameters live in one flat buffer (per layer: row-major weights, then
//! biases) so optimizers and checkpoints can treat every network uniformly.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Sigmoid,
    Softplus,
    /// exp with the raw value clamped to [-30, 30] for stability.
    Exp,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::None => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Softplus => {
                // Numerically stable ln(1 + e^z).
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Exp => z.clamp(-30.0, 30.0).exp(),
        }
    }

    pub fn derivative(self, z: f64, value: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Sigmoid => value * (1.0 - value),
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Exp => {
                if (-30.0..=30.0).contains(&z) {
                    value
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// Layer widths, input first: [in, hidden..., out].
    pub sizes: Vec<usize>,
    pub output_activation: Activation,
    pub params: Vec<f64>,
}

/// Reusable forward-pass buffers for [`Mlp::forward_trace`].
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    /// layer_inputs[l] is the input to layer l (post-activation of l-1).
    layer_inputs: Vec<Vec<f64>>,
    /// pre_acts[l] is the raw affine output of layer l.
    pre_acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// He-style uniform initialization with zero biases.
    pub fn new(sizes: &[usize], output_activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2);
        let mut params = vec![0.0; Self::param_count_for(sizes)];
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params[off..off + fan_in * fan_out].iter_mut() {
                *p = rng.gen_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out; // biases stay zero
        }
        Mlp { sizes: sizes.to_vec(), output_activation, params }
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        (off, off + self.sizes[layer] * self.sizes[layer + 1])
    }

    /// Forward pass recording everything the backward pass needs.
    pub fn forward_trace(&self, x: &[f64], trace: &mut MlpTrace) {
        debug_assert_eq!(x.len(), self.input_len());
        let layers = self.layer_count();
        trace.layer_inputs.resize(layers, Vec::new());
        trace.pre_acts.resize(layers, Vec::new());
        trace.layer_inputs[0].clear();
        trace.layer_inputs[0].extend_from_slice(x);
        for l in 0..layers {
            let (w_off, b_off) = self.layer_offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if trace.layer_inputs[l].len() != n_in {
                // Only possible through misuse; keep the check cheap.
                debug_assert_eq!(trace.layer_inputs[l].len(), n_in);
            }
            let mut z = std::mem::take(&mut trace.pre_acts[l]);
            z.clear();
            z.resize(n_out, 0.0);
            {
                let input = &trace.layer_inputs[l];
                let weights = &self.params[w_off..w_off + n_in * n_out];
                let biases = &self.params[b_off..b_off + n_out];
                for (row, zr) in z.iter_mut().enumerate() {
                    let wrow = &weights[row * n_in..(row + 1) * n_in];
                    let mut acc = biases[row];
                    for (w, xi) in wrow.iter().zip(input.iter()) {
                        acc += w * xi;
                    }
                    *zr = acc;
                }
            }
            if l + 1 < layers {
                let mut next = std::mem::take(&mut trace.layer_inputs[l + 1]);
                next.clear();
                next.extend(z.iter().map(|&v| v.max(0.0)));
                trace.layer_inputs[l + 1] = next;
            } else {
                trace.output.clear();
                trace
                    .output
                    .extend(z.iter().map(|&v| self.output_activation.apply(v)));
            }
            trace.pre_acts[l] = z;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut trace = MlpTrace::default();
        self.forward_trace(x, &mut trace);
        trace.output
    }

    /// Backward pass. `d_output` is the gradient w.r.t. the post-activation
    /// output; parameter gradients are accumulated into `grads` (same layout
    /// as `params`) and the gradient w.r.t. the input is returned in `d_in`.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        d_output: &[f64],
        grads: &mut [f64],
        d_in: &mut Vec<f64>,
    ) {
        debug_assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(d_output.len(), self.output_len());
        let layers = self.layer_count();
        // d w.r.t. pre-activation of the current layer.
        let mut delta: Vec<f64> = trace.pre_acts[layers - 1]
            .iter()
            .zip(trace.output.iter())
            .zip(d_output.iter())
            .map(|((&z, &v), &g)| g * self.output_activation.derivative(z, v))
            .collect();
        for l in (0..layers).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.layer_inputs[l];
            {
                let gw = &mut grads[w_off..w_off + n_in * n_out];
                for (row, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let grow = &mut gw[row * n_in..(row + 1) * n_in];
                    for (g, xi) in grow.iter_mut().zip(input.iter()) {
                        *g += d * xi;
                    }
                }
            }
            for (g, &d) in grads[b_off..b_off + n_out].iter_mut().zip(delta.iter()) {
                *g += d;
            }
            // Propagate to the previous layer.
            d_in.clear();
            d_in.resize(n_in, 0.0);
            let weights = &self.params[w_off..w_off + n_in * n_out];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let wrow = &weights[row * n_in..(row + 1) * n_in];
                for (di, w) in d_in.iter_mut().zip(wrow.iter()) {
                    *di += d * w;
                }
            }
            if l > 0 {
                // Through the rectifier of the previous layer.
                delta = trace.pre_acts[l - 1]
                    .iter()
                    .zip(d_in.iter())
                    .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
                    .collect();
            }
        }
    }

    pub fn check_compatible(&self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::shape("mlp layer sizes differ"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(mlp: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        let out = mlp.forward(x);
        out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for act in [Activation::None, Activation::Sigmoid, Activation::Softplus, Activation::Exp] {
            let mut mlp = Mlp::new(&[3, 8, 8, 2], act, &mut rng);
            let x = [0.3, -0.2, 0.9];
            let target = [0.4, 0.1];
            let mut trace = MlpTrace::default();
            mlp.forward_trace(&x, &mut trace);
            let d_out: Vec<f64> = trace
                .output
                .iter()
                .zip(target.iter())
                .map(|(o, t)| 2.0 * (o - t))
                .collect();
            let mut grads = vec![0.0; mlp.params.len()];
            let mut d_in = Vec::new();
            mlp.backward(&trace, &d_out, &mut grads, &mut d_in);

            let h = 1e-6;
            // Spot-check a spread of parameters.
            for idx in (0..mlp.params.len()).step_by(7) {
                let orig = mlp.params[idx];
                mlp.params[idx] = orig + h;
                let lp = loss(&mlp, &x, &target);
                mlp.params[idx] = orig - h;
                let lm = loss(&mlp, &x, &target);
                mlp.params[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - grads[idx]).abs() < 1e-6 * fd.abs().max(grads[idx].abs()).max(1.0),
                    "{act:?} param {idx}: fd {fd} vs analytic {}",
                    grads[idx]
                );
            }
            // And the input gradient.
            let mut xm = x;
            for i in 0..3 {
                let orig = xm[i];
                xm[i] = orig + h;
                let lp = loss(&mlp, &xm, &target);
                xm[i] = orig - h;
                let lm = loss(&mlp, &xm, &target);
                xm[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - d_in[i]).abs() < 1e-6 * fd.abs().max(d_in[i].abs()).max(1.0),
                    "{act:?} input {i}: fd {fd} vs {}",
                    d_in[i]
                );
            }
        }
    }

    #[test]
    fn sigmoid_output_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[4, 16, 3], Activation::Sigmoid, &mut rng);
        let out = mlp.forward(&[10.0, -10.0, 3.0, 0.0]);
        for v in out {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn softplus_positive_and_stable() {
        assert!(Activation::Softplus.apply(-40.0) > 0.0);
        assert!((Activation::Softplus.apply(40.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn param_count() {
        assert_eq!(Mlp::param_count_for(&[3, 8, 2]), 3 * 8 + 8 + 8 * 2 + 2);
    }
}
