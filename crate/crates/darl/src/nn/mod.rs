//! Minimal multilayer perceptron with hand-rolled reverse-mode gradients.
//!
//! Hidden layers apply an elementwise activation (tanh by default); the
//! output layer is linear. Everything is 64-bit and single-threaded, so
//! identical seeds give bitwise-identical training runs. Gradients are
//! exact and checked against central finite differences in the tests.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState, AdamVec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Checkpoint(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fully connected network. `weights[l]` is row-major
/// `sizes[l+1] x sizes[l]`, `biases[l]` has length `sizes[l+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Cached layer inputs from a forward pass; `inputs[l]` is what layer `l`
/// consumed (so `inputs[l+1]` is layer `l`'s post-activation output).
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
}

/// Parameter gradients, shaped like the network they came from.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Accumulates `other`, scaled, into `self`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        for (dst, src) in self.biases.iter_mut().zip(&other.biases) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// Glorot-uniform weights in `(-a, a)` with `a = sqrt(6/(fan_in+fan_out))`,
    /// zero biases, deterministic under `seed`.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// All-zero parameters. Useful as a stub predictor.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let weights = (0..sizes.len() - 1)
            .map(|l| vec![0.0; sizes[l] * sizes[l + 1]])
            .collect();
        let biases = (0..sizes.len() - 1).map(|l| vec![0.0; sizes[l + 1]]).collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "layer size list needs at least input and output".into(),
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        Ok(())
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

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Forward pass returning the output and a tape for [`Mlp::backward`].
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut x = input.to_vec();
        for l in 0..self.layer_count() {
            let y = self.layer_forward(l, &x);
            inputs.push(std::mem::replace(&mut x, y));
        }
        Ok((x, Tape { inputs }))
    }

    /// Forward pass without tape allocation, for inference-only callers.
    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.layer_count() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input length {} does not match first layer size {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.weights[l];
        let b = &self.biases[l];
        let mut y = vec![0.0; n_out];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y[o] = if l + 1 == self.layer_count() {
                acc
            } else {
                self.activation.apply(acc)
            };
        }
        y
    }

    /// Exact reverse-mode gradients of `output · output_gradient` with
    /// respect to every parameter. `tape` must come from a forward pass of
    /// this network on the matching input.
    pub fn backward(&self, tape: &Tape, output_gradient: &[f64]) -> Result<Gradients> {
        if output_gradient.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "output gradient length {} does not match output size {}",
                output_gradient.len(),
                self.output_dim()
            )));
        }
        if tape.inputs.len() != self.layer_count()
            || tape
                .inputs
                .iter()
                .enumerate()
                .any(|(l, x)| x.len() != self.sizes[l])
        {
            return Err(Error::Dimension("tape does not match network shape".into()));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut g = output_gradient.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &tape.inputs[l];
            // For hidden layers the tape holds the post-activation output as
            // the next layer's input; fold the activation derivative into g.
            if l + 1 < self.layer_count() {
                let a = &tape.inputs[l + 1];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi *= self.activation.derivative_from_output(*ai);
                }
            }
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let mut gx = vec![0.0; n_in];
            for o in 0..n_out {
                let go = g[o];
                gb[o] += go;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += go * x[i];
                    gx[i] += row[i] * go;
                }
            }
            g = gx;
        }
        Ok(grads)
    }

    /// Flat parameter vector: per layer, weights row-major then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.layer_count() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn from_flat_params(
        sizes: &[usize],
        activation: Activation,
        params: &[f64],
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        if params.len() != net.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                net.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for l in 0..net.layer_count() {
            let wn = net.weights[l].len();
            net.weights[l].copy_from_slice(&params[off..off + wn]);
            off += wn;
            let bn = net.biases[l].len();
            net.biases[l].copy_from_slice(&params[off..off + bn]);
            off += bn;
        }
        Ok(net)
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Zeroes the final layer so a fresh network outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.layer_count() - 1;
        self.weights[last].fill(0.0);
        self.biases[last].fill(0.0);
    }

    pub fn to_checkpoint(&self, seed: u64) -> MlpCheckpoint {
        MlpCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            sizes: self.sizes.clone(),
            activation: self.activation.name().to_string(),
            params: self.flat_params(),
            seed,
        }
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        let activation = Activation::from_name(&ckpt.activation)?;
        Self::from_flat_params(&ckpt.sizes, activation, &ckpt.params)
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.biases
    }

    pub(crate) fn weights_ref(&self) -> &Vec<Vec<f64>> {
        &self.weights
    }

    pub(crate) fn biases_ref(&self) -> &Vec<Vec<f64>> {
        &self.biases
    }
}

/// On-disk parameter format: JSON, self-describing, lossless for f64.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format_version: u32,
    pub sizes: Vec<usize>,
    pub activation: String,
    pub params: Vec<f64>,
    pub seed: u64,
}

#[cfg(test)]
mod tests;
