//! Layer kernels over flat parameter slices.
//!
//! Dense weights are `fan_out × fan_in` row-major followed by `fan_out` biases.
//! LSTM weights are `4H × (F + H)` row-major (gate blocks i, f, g, o; input
//! columns before recurrent ones) followed by `4H` biases.

use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Lstm,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense, fan_in, fan_out, activation }
    }

    /// LSTM over `fan_in` features with `hidden` units; emits the last hidden state.
    pub fn lstm(fan_in: usize, hidden: usize) -> Self {
        Self { kind: LayerKind::Lstm, fan_in, fan_out: hidden, activation: Activation::Tanh }
    }

    pub fn softmax(width: usize) -> Self {
        Self { kind: LayerKind::Softmax, fan_in: width, fan_out: width, activation: Activation::Linear }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.fan_in == 0 || self.fan_out == 0 {
            return Err(NeuralError::InvalidSpec(format!("{:?} layer needs fan_in, fan_out >= 1", self.kind)));
        }
        if self.kind == LayerKind::Softmax && self.fan_in != self.fan_out {
            return Err(NeuralError::InvalidSpec("softmax must preserve width".into()));
        }
        if self.kind == LayerKind::Lstm && self.activation != Activation::Tanh {
            return Err(NeuralError::InvalidSpec("lstm uses tanh".into()));
        }
        Ok(())
    }

    /// Shape of the weight matrix (rows, cols), if any.
    pub fn weight_shape(&self) -> Option<(usize, usize)> {
        match self.kind {
            LayerKind::Dense => Some((self.fan_out, self.fan_in)),
            LayerKind::Lstm => Some((4 * self.fan_out, self.fan_in + self.fan_out)),
            LayerKind::Softmax => None,
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.fan_out,
            LayerKind::Lstm => 4 * self.fan_out,
            LayerKind::Softmax => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().map_or(0, |(r, c)| r * c) + self.bias_len()
    }

    /// Fan-in used for initialisation scaling.
    pub fn init_fan_in(&self) -> usize {
        self.weight_shape().map_or(1, |(_, c)| c)
    }
}

/// Four independent partial sums so the loop vectorises; the summation order is fixed.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    out: Vec<f64>,
}

pub(crate) fn dense_forward(spec: &LayerSpec, p: &[f64], x: &[f64]) -> (Vec<f64>, DenseCache) {
    let (n_in, n_out) = (spec.fan_in, spec.fan_out);
    let (w, b) = p.split_at(n_in * n_out);
    let pre: Vec<f64> = (0..n_out).map(|o| b[o] + dot(&w[o * n_in..(o + 1) * n_in], x)).collect();
    let out: Vec<f64> = pre.iter().map(|&z| spec.activation.apply(z)).collect();
    (out.clone(), DenseCache { input: x.to_vec(), pre, out })
}

/// Accumulates parameter gradients into `g`; returns the input gradient.
pub(crate) fn dense_backward(spec: &LayerSpec, p: &[f64], cache: &DenseCache, dy: &[f64], g: &mut [f64]) -> Vec<f64> {
    let (n_in, n_out) = (spec.fan_in, spec.fan_out);
    let w = &p[..n_in * n_out];
    let (gw, gb) = g.split_at_mut(n_in * n_out);
    let mut dx = vec![0.0; n_in];
    for o in 0..n_out {
        let dz = dy[o] * spec.activation.derivative(cache.pre[o], cache.out[o]);
        if dz == 0.0 {
            continue;
        }
        gb[o] += dz;
        let row = &w[o * n_in..(o + 1) * n_in];
        let grow = &mut gw[o * n_in..(o + 1) * n_in];
        for ((g, x), (d, w)) in grow.iter_mut().zip(&cache.input).zip(dx.iter_mut().zip(row)) {
            *g += dz * x;
            *d += dz * w;
        }
    }
    dx
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Jacobian-vector product of softmax given its output.
pub(crate) fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let s = dot(y, dy);
    y.iter().zip(dy).map(|(p, d)| p * (d - s)).collect()
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Per step: concatenated `[x_t; h_{t-1}]`.
    xh: Vec<Vec<f64>>,
    /// Per step: activated gates `[i, f, g, o]`.
    gates: Vec<Vec<f64>>,
    /// Cell states c_0 (zeros) .. c_T.
    c: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

/// Runs the sequence `x` (`steps × fan_in`, row-major) from zero state; returns h_T.
pub(crate) fn lstm_forward(spec: &LayerSpec, p: &[f64], x: &[f64], steps: usize) -> (Vec<f64>, LstmCache) {
    let (f_in, h_n) = (spec.fan_in, spec.fan_out);
    let cols = f_in + h_n;
    let (w, b) = p.split_at(4 * h_n * cols);
    let mut h = vec![0.0; h_n];
    let mut cache = LstmCache {
        xh: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        c: vec![vec![0.0; h_n]],
        tanh_c: Vec::with_capacity(steps),
    };
    for t in 0..steps {
        let mut xh = Vec::with_capacity(cols);
        xh.extend_from_slice(&x[t * f_in..(t + 1) * f_in]);
        xh.extend_from_slice(&h);
        let mut gates: Vec<f64> = (0..4 * h_n).map(|r| b[r] + dot(&w[r * cols..(r + 1) * cols], &xh)).collect();
        for (r, v) in gates.iter_mut().enumerate() {
            *v = if r / h_n == 2 { v.tanh() } else { sigmoid(*v) };
        }
        let c_prev = cache.c.last().unwrap();
        let c: Vec<f64> = (0..h_n).map(|j| gates[h_n + j] * c_prev[j] + gates[j] * gates[2 * h_n + j]).collect();
        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        h = (0..h_n).map(|j| gates[3 * h_n + j] * tc[j]).collect();
        cache.xh.push(xh);
        cache.gates.push(gates);
        cache.c.push(c);
        cache.tanh_c.push(tc);
    }
    (h, cache)
}

/// Backpropagation through time from a gradient on h_T; returns the input-sequence gradient.
pub(crate) fn lstm_backward(spec: &LayerSpec, p: &[f64], cache: &LstmCache, dh_last: &[f64], g: &mut [f64]) -> Vec<f64> {
    let (f_in, h_n) = (spec.fan_in, spec.fan_out);
    let cols = f_in + h_n;
    let steps = cache.gates.len();
    let w = &p[..4 * h_n * cols];
    let (gw, gb) = g.split_at_mut(4 * h_n * cols);
    let mut dx = vec![0.0; steps * f_in];
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; h_n];
    let mut dz = vec![0.0; 4 * h_n];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let (c_prev, tc) = (&cache.c[t], &cache.tanh_c[t]);
        for j in 0..h_n {
            let (i, f, gg, o) = (gates[j], gates[h_n + j], gates[2 * h_n + j], gates[3 * h_n + j]);
            let dcj = dc[j] + dh[j] * o * (1.0 - tc[j] * tc[j]);
            dz[j] = dcj * gg * i * (1.0 - i);
            dz[h_n + j] = dcj * c_prev[j] * f * (1.0 - f);
            dz[2 * h_n + j] = dcj * i * (1.0 - gg * gg);
            dz[3 * h_n + j] = dh[j] * tc[j] * o * (1.0 - o);
            dc[j] = dcj * f;
        }
        let xh = &cache.xh[t];
        let mut dxh = vec![0.0; cols];
        for r in 0..4 * h_n {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            gb[r] += d;
            let row = &w[r * cols..(r + 1) * cols];
            let grow = &mut gw[r * cols..(r + 1) * cols];
            for ((g, x), (dv, w)) in grow.iter_mut().zip(xh).zip(dxh.iter_mut().zip(row)) {
                *g += d * x;
                *dv += d * w;
            }
        }
        dx[t * f_in..(t + 1) * f_in].copy_from_slice(&dxh[..f_in]);
        dh.copy_from_slice(&dxh[f_in..]);
    }
    dx
}
