//! Multi-branch networks over a shared `steps × features` input window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dense_backward, dense_forward, lstm_backward, lstm_forward, softmax, softmax_backward, DenseCache, LayerKind,
    LayerSpec, LstmCache,
};
use super::NeuralError;
use crate::seed::rng_from_seed;

/// How a branch reads the shared input window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchInput {
    /// Whole window flattened into one vector.
    Flat,
    /// Window fed step by step to a leading LSTM.
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// Mean squared error.
    Regression,
    /// Softmax output with cross-entropy.
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub name: String,
    pub input: BranchInput,
    pub layers: Vec<LayerSpec>,
    pub output: OutputKind,
}

impl BranchSpec {
    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub steps: usize,
    pub features: usize,
    pub branches: Vec<BranchSpec>,
}

impl Architecture {
    pub fn input_len(&self) -> usize {
        self.steps * self.features
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidSpec(m));
        if self.steps == 0 || self.features == 0 {
            return bad("input window must be non-empty".into());
        }
        if self.branches.is_empty() {
            return bad("network needs at least one branch".into());
        }
        for b in &self.branches {
            let Some(first) = b.layers.first() else {
                return bad(format!("branch {} has no layers", b.name));
            };
            for l in &b.layers {
                l.validate()?;
            }
            match b.input {
                BranchInput::Flat if first.kind != LayerKind::Dense || first.fan_in != self.input_len() => {
                    return bad(format!("branch {}: flat input needs a leading dense layer of fan_in {}", b.name, self.input_len()));
                }
                BranchInput::Sequence if first.kind != LayerKind::Lstm || first.fan_in != self.features => {
                    return bad(format!("branch {}: sequence input needs a leading lstm of fan_in {}", b.name, self.features));
                }
                _ => {}
            }
            if b.layers.iter().skip(1).any(|l| l.kind == LayerKind::Lstm) {
                return bad(format!("branch {}: lstm is only supported as the first layer", b.name));
            }
            for w in b.layers.windows(2) {
                if w[0].fan_out != w[1].fan_in {
                    return bad(format!("branch {}: width {} feeds a layer expecting {}", b.name, w[0].fan_out, w[1].fan_in));
                }
            }
            let last = b.layers.last().unwrap().kind;
            match b.output {
                OutputKind::Classification if last != LayerKind::Softmax => {
                    return bad(format!("branch {}: classification must end in softmax", b.name));
                }
                OutputKind::Regression if last == LayerKind::Softmax => {
                    return bad(format!("branch {}: regression cannot end in softmax", b.name));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().flat_map(|b| &b.layers).map(LayerSpec::param_count).sum()
    }
}

/// Architecture plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    /// Parameter offset of every layer, per branch.
    offsets: Vec<Vec<usize>>,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense(DenseCache),
    Lstm(LstmCache),
    Softmax(Vec<f64>),
}

/// Outputs of one forward pass, with activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub outputs: Vec<Vec<f64>>,
    caches: Vec<Vec<LayerCache>>,
}

/// Loss gradient arriving at a branch output.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputGrad {
    /// With respect to the branch output.
    Output(Vec<f64>),
    /// With respect to the input of the final softmax (fused softmax + cross-entropy).
    Logits(Vec<f64>),
}

impl Network {
    /// Uniform initialisation in ±1/√fan_in, seeded.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(arch)?;
        let mut rng = rng_from_seed(seed);
        for (bi, b) in net.arch.branches.iter().enumerate() {
            for (li, l) in b.layers.iter().enumerate() {
                let scale = 1.0 / (l.init_fan_in() as f64).sqrt();
                let off = net.offsets[bi][li];
                for p in &mut net.params[off..off + l.param_count()] {
                    *p = rng.random_range(-scale..scale);
                }
            }
        }
        Ok(net)
    }

    pub fn zeros(arch: Architecture) -> Result<Self, NeuralError> {
        arch.validate()?;
        let mut offsets = Vec::with_capacity(arch.branches.len());
        let mut next = 0;
        for b in &arch.branches {
            offsets.push(
                b.layers
                    .iter()
                    .map(|l| {
                        let o = next;
                        next += l.param_count();
                        o
                    })
                    .collect(),
            );
        }
        Ok(Self { arch, offsets, params: vec![0.0; next] })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(arch)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NeuralError> {
        if params.len() != self.params.len() {
            return Err(NeuralError::ShapeMismatch { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter slice of one layer.
    pub fn layer_params(&self, branch: usize, layer: usize) -> &[f64] {
        let l = &self.arch.branches[branch].layers[layer];
        let off = self.offsets[branch][layer];
        &self.params[off..off + l.param_count()]
    }

    pub fn layer_params_mut(&mut self, branch: usize, layer: usize) -> &mut [f64] {
        let n = self.arch.branches[branch].layers[layer].param_count();
        let off = self.offsets[branch][layer];
        &mut self.params[off..off + n]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>, NeuralError> {
        Ok(self.forward_with(&self.params, input)?.outputs)
    }

    /// Forward pass with an explicit parameter vector of this network's layout.
    pub fn forward_with(&self, params: &[f64], input: &[f64]) -> Result<Forward, NeuralError> {
        if input.len() != self.arch.input_len() {
            return Err(NeuralError::ShapeMismatch { expected: self.arch.input_len(), got: input.len() });
        }
        if params.len() != self.params.len() {
            return Err(NeuralError::ShapeMismatch { expected: self.params.len(), got: params.len() });
        }
        let mut outputs = Vec::with_capacity(self.arch.branches.len());
        let mut caches = Vec::with_capacity(self.arch.branches.len());
        for (bi, b) in self.arch.branches.iter().enumerate() {
            let mut x = input.to_vec();
            let mut bc = Vec::with_capacity(b.layers.len());
            for (li, l) in b.layers.iter().enumerate() {
                let p = &params[self.offsets[bi][li]..self.offsets[bi][li] + l.param_count()];
                let (y, c) = match l.kind {
                    LayerKind::Dense => {
                        let (y, c) = dense_forward(l, p, &x);
                        (y, LayerCache::Dense(c))
                    }
                    LayerKind::Lstm => {
                        let (y, c) = lstm_forward(l, p, &x, self.arch.steps);
                        (y, LayerCache::Lstm(c))
                    }
                    LayerKind::Softmax => {
                        let y = softmax(&x);
                        (y.clone(), LayerCache::Softmax(y))
                    }
                };
                bc.push(c);
                x = y;
            }
            outputs.push(x);
            caches.push(bc);
        }
        Ok(Forward { outputs, caches })
    }

    /// Accumulates parameter gradients for one sample into `grad`.
    pub fn backward_with(
        &self,
        params: &[f64],
        fwd: &Forward,
        output_grads: &[OutputGrad],
        grad: &mut [f64],
    ) -> Result<(), NeuralError> {
        if output_grads.len() != self.arch.branches.len() {
            return Err(NeuralError::ShapeMismatch { expected: self.arch.branches.len(), got: output_grads.len() });
        }
        if grad.len() != self.params.len() {
            return Err(NeuralError::ShapeMismatch { expected: self.params.len(), got: grad.len() });
        }
        for (bi, b) in self.arch.branches.iter().enumerate() {
            let (mut d, mut top) = match &output_grads[bi] {
                OutputGrad::Output(d) => (d.clone(), b.layers.len()),
                OutputGrad::Logits(d) => {
                    if b.layers.last().map(|l| l.kind) != Some(LayerKind::Softmax) {
                        return Err(NeuralError::InvalidSpec(format!("branch {} has no softmax for logit gradients", b.name)));
                    }
                    (d.clone(), b.layers.len() - 1)
                }
            };
            if d.len() != b.layers[top - 1].fan_out {
                return Err(NeuralError::ShapeMismatch { expected: b.layers[top - 1].fan_out, got: d.len() });
            }
            while top > 0 {
                let li = top - 1;
                let l = &b.layers[li];
                let off = self.offsets[bi][li];
                let n = l.param_count();
                let p = &params[off..off + n];
                let g = &mut grad[off..off + n];
                d = match &fwd.caches[bi][li] {
                    LayerCache::Dense(c) => dense_backward(l, p, c, &d, g),
                    LayerCache::Lstm(c) => lstm_backward(l, p, c, &d, g),
                    LayerCache::Softmax(y) => softmax_backward(y, &d),
                };
                top -= 1;
            }
        }
        Ok(())
    }

    /// Gradient of one sample with an explicit loss gradient.
    pub fn backward(&self, fwd: &Forward, output_grads: &[OutputGrad]) -> Result<Vec<f64>, NeuralError> {
        let mut g = vec![0.0; self.params.len()];
        self.backward_with(&self.params, fwd, output_grads, &mut g)?;
        Ok(g)
    }
}
