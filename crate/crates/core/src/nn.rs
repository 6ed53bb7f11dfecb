//! Minimal multilayer-perceptron engine.
//!
//! Float64 throughout, leaky-rectifier hidden activations, identity output,
//! exact reverse-mode gradients, and an adaptive-moment optimizer. This is
//! the only learning machinery the surrogate needs; there is no general
//! autodiff graph.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Negative slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Fully-connected network. Parameters live in one flat buffer laid out
/// layer by layer: the row-major `out x in` weight matrix, then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer offsets into the flat parameter buffer.
fn layer_offsets(sizes: &[usize]) -> Vec<(usize, usize, usize)> {
    // (weight offset, bias offset, end)
    let mut out = Vec::with_capacity(sizes.len() - 1);
    let mut at = 0;
    for l in 0..sizes.len() - 1 {
        let w = at;
        let b = at + sizes[l + 1] * sizes[l];
        at = b + sizes[l + 1];
        out.push((w, b, at));
    }
    out
}

/// Activations cached by a forward pass, consumed by backprop.
pub struct ForwardCache {
    input: Vec<f64>,
    /// Post-activation output of every layer, final layer last.
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }
}

/// Parameter and input gradients from one backward pass.
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// Seeded uniform(-a, a) initialization with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need input and output layers");
        let mut rng = rng::seeded(seed);
        let total: usize = layer_offsets(sizes).last().map(|&(_, _, end)| end).unwrap();
        let mut params = vec![0.0; total];
        for (l, (w_off, b_off, _)) in layer_offsets(sizes).into_iter().enumerate() {
            let a = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            for p in &mut params[w_off..b_off] {
                *p = rng.gen_range(-a..=a);
            }
            // biases start at zero
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Pure forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.outputs.pop_unwrap())
    }

    /// Forward pass retaining the per-layer activations for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.sizes[0] {
            return Err(Error::shape(format!(
                "mlp input {} != expected {}",
                input.len(),
                self.sizes[0]
            )));
        }
        let offsets = layer_offsets(&self.sizes);
        let last = offsets.len() - 1;
        let mut outputs = Vec::with_capacity(offsets.len());
        let mut current = input;
        for (l, &(w_off, b_off, _)) in offsets.iter().enumerate() {
            let (rows, cols) = (self.sizes[l + 1], self.sizes[l]);
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &self.params[w_off + r * cols..w_off + (r + 1) * cols];
                let mut acc = self.params[b_off + r];
                for (w, v) in row.iter().zip(current) {
                    acc += w * v;
                }
                if l < last && acc < 0.0 {
                    acc *= LEAKY_SLOPE;
                }
                out.push(acc);
            }
            outputs.push(out);
            current = outputs.last().unwrap();
        }
        Ok(ForwardCache { input: input.to_vec(), outputs })
    }

    /// Exact reverse-mode gradients for a loss adjoint at the output.
    pub fn backward(&self, cache: &ForwardCache, out_adjoint: &[f64]) -> Result<Gradients> {
        if out_adjoint.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "adjoint {} != output {}",
                out_adjoint.len(),
                self.output_dim()
            )));
        }
        let offsets = layer_offsets(&self.sizes);
        let last = offsets.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = out_adjoint.to_vec();
        for l in (0..offsets.len()).rev() {
            let (w_off, b_off, _) = offsets[l];
            let (rows, cols) = (self.sizes[l + 1], self.sizes[l]);
            let layer_out = &cache.outputs[l];
            // activation derivative; the output layer is identity
            if l < last {
                for (d, &o) in delta.iter_mut().zip(layer_out) {
                    if o < 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                }
            }
            let below: &[f64] = if l == 0 { &cache.input } else { &cache.outputs[l - 1] };
            let mut next_delta = vec![0.0; cols];
            for r in 0..rows {
                grads[b_off + r] += delta[r];
                let w_row = &self.params[w_off + r * cols..w_off + (r + 1) * cols];
                let g_row = &mut grads[w_off + r * cols..w_off + (r + 1) * cols];
                for c in 0..cols {
                    g_row[c] += delta[r] * below[c];
                    next_delta[c] += delta[r] * w_row[c];
                }
            }
            delta = next_delta;
        }
        Ok(Gradients { params: grads, input: delta })
    }
}

trait PopUnwrap {
    fn pop_unwrap(self) -> Vec<f64>;
}

impl PopUnwrap for Vec<Vec<f64>> {
    fn pop_unwrap(mut self) -> Vec<f64> {
        self.pop().expect("non-empty")
    }
}

/// Adam accumulators for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        OptimizerState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            learning_rate,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected adaptive-moment update, in place.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64]) {
    assert_eq!(params.len(), state.m.len());
    assert_eq!(grads.len(), state.m.len());
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{fd_gradient, gradcheck_rel_error};

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = Mlp::new(&[3, 4, 2], 0);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let mut net = Mlp::new(&[1, 1], 0);
        net.params_mut().copy_from_slice(&[2.0, 1.0]);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn leaky_rectifier_slope() {
        // identity chain through one hidden unit
        let mut net = Mlp::new(&[1, 1, 1], 0);
        net.params_mut().copy_from_slice(&[1.0, 0.0, 1.0, 0.0]);
        let out = net.forward(&[-1.0]).unwrap();
        assert!((out[0] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn input_shape_is_checked() {
        let net = Mlp::new(&[3, 2], 0);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_layer_gradient_matches_hand_derivation() {
        // y = Wx + b, loss = 0.5 (y - t)^2: dW = (y - t) x, db = y - t
        let mut net = Mlp::new(&[2, 1], 0);
        net.params_mut().copy_from_slice(&[0.5, -1.5, 0.25]);
        let x = [2.0, 1.0];
        let target = 1.0;
        let cache = net.forward_cached(&x).unwrap();
        let y = cache.output()[0];
        let adj = y - target;
        let grads = net.backward(&cache, &[adj]).unwrap();
        assert!((grads.params[0] - adj * x[0]).abs() < 1e-12);
        assert!((grads.params[1] - adj * x[1]).abs() < 1e-12);
        assert!((grads.params[2] - adj).abs() < 1e-12);
        assert!((grads.input[0] - adj * 0.5).abs() < 1e-12);
        assert!((grads.input[1] - adj * -1.5).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, sizes) in [(1u64, vec![4, 8, 8, 2]), (2, vec![1, 5, 1]), (3, vec![6, 3, 3, 3])] {
            let net = Mlp::new(&sizes, seed);
            let input: Vec<f64> = (0..sizes[0]).map(|i| (i as f64) * 0.37 - 0.8).collect();
            // scalar loss: sum of squared outputs
            let loss = |net: &Mlp| -> f64 {
                net.forward(&input).unwrap().iter().map(|o| 0.5 * o * o).sum()
            };
            let cache = net.forward_cached(&input).unwrap();
            let adjoint: Vec<f64> = cache.output().to_vec();
            let analytic = net.backward(&cache, &adjoint).unwrap();
            let numeric = fd_gradient(net.param_count(), 1e-5, |p| {
                let mut probe = net.clone();
                probe.params_mut().copy_from_slice(p);
                loss(&probe)
            }, net.params());
            let worst = analytic
                .params
                .iter()
                .zip(&numeric)
                .map(|(&a, &b)| gradcheck_rel_error(a, b))
                .fold(0.0, f64::max);
            assert!(worst < 1e-4, "gradcheck failed: {worst}");
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], 4);
        let cache = net.forward_cached(&[0.1, 0.2, 0.3]).unwrap();
        let grads = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(grads.params.iter().all(|&g| g == 0.0));
        assert!(grads.input.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut state = OptimizerState::new(3, 1e-3);
        let mut params = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut state = OptimizerState::new(2, 1e-3);
        let mut params = vec![0.0, 0.0];
        adam_step(&mut state, &mut params, &[0.5, -0.25]);
        for (&p, &g) in params.iter().zip(&[0.5f64, -0.25]) {
            assert!(((p.abs() / 1e-3) - 1.0).abs() < 1e-6, "step {p}");
            assert_eq!(p.signum(), -g.signum());
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let mut s1 = OptimizerState::new(2, 1e-3);
        let mut s2 = OptimizerState::new(2, 1e-3);
        let mut p1 = vec![0.3, 0.7];
        let mut p2 = vec![0.3, 0.7];
        for _ in 0..10 {
            adam_step(&mut s1, &mut p1, &[0.1, -0.2]);
            adam_step(&mut s2, &mut p2, &[0.1, -0.2]);
        }
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }
}
