//! Weighted multi-task loss and batch gradients.

use serde::{Deserialize, Serialize};

use super::network::{Network, OutputGrad, OutputKind};
use super::NeuralError;
use crate::par::Execution;

/// Samples per gradient chunk; chunks are reduced in index order.
pub const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Values(Vec<f64>),
    Class(usize),
    /// No label for this branch; contributes zero loss and gradient.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `steps × features`, row-major.
    pub input: Vec<f64>,
    /// One target per branch.
    pub targets: Vec<Target>,
}

/// Per-task and total loss of one sample or batch mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_branch: Vec<f64>,
}

pub fn mse(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

pub fn cross_entropy(p: &[f64], class: usize) -> f64 {
    -p[class].max(f64::MIN_POSITIVE).ln()
}

fn check(net: &Network, outputs: &[Vec<f64>], targets: &[Target], weights: &[f64]) -> Result<(), NeuralError> {
    let n = net.architecture().branches.len();
    if targets.len() != n || weights.len() != n || outputs.len() != n {
        return Err(NeuralError::ShapeMismatch { expected: n, got: targets.len().min(weights.len()) });
    }
    for ((b, t), y) in net.architecture().branches.iter().zip(targets).zip(outputs) {
        match (b.output, t) {
            (OutputKind::Regression, Target::Values(v)) if v.len() == y.len() => {}
            (OutputKind::Classification, Target::Class(c)) if *c < y.len() => {}
            (_, Target::Skip) => {}
            _ => return Err(NeuralError::TargetMismatch(b.name.clone())),
        }
    }
    Ok(())
}

/// `Σ λ_b·loss_b` for one sample's outputs.
pub fn sample_loss(
    net: &Network,
    outputs: &[Vec<f64>],
    targets: &[Target],
    weights: &[f64],
) -> Result<LossBreakdown, NeuralError> {
    check(net, outputs, targets, weights)?;
    let per_branch: Vec<f64> = outputs
        .iter()
        .zip(targets)
        .map(|(y, t)| match t {
            Target::Values(v) => mse(y, v),
            Target::Class(c) => cross_entropy(y, *c),
            Target::Skip => 0.0,
        })
        .collect();
    let total = per_branch.iter().zip(weights).map(|(l, w)| l * w).sum();
    Ok(LossBreakdown { total, per_branch })
}

/// Loss gradients for one sample, multiplied by `scale`.
pub fn output_grads(outputs: &[Vec<f64>], targets: &[Target], weights: &[f64], scale: f64) -> Vec<OutputGrad> {
    outputs
        .iter()
        .zip(targets)
        .zip(weights)
        .map(|((y, t), w)| match t {
            Target::Values(v) => {
                let k = 2.0 * w * scale / y.len() as f64;
                OutputGrad::Output(y.iter().zip(v).map(|(a, b)| k * (a - b)).collect())
            }
            Target::Class(c) => OutputGrad::Logits(
                y.iter().enumerate().map(|(i, p)| w * scale * (p - if i == *c { 1.0 } else { 0.0 })).collect(),
            ),
            Target::Skip => OutputGrad::Output(vec![0.0; y.len()]),
        })
        .collect()
}

/// Mean loss and summed gradient (with the 1/n factor in the loss gradient) over `samples`.
pub fn batch_gradient(
    net: &Network,
    params: &[f64],
    samples: &[&Sample],
    weights: &[f64],
    exec: Execution,
) -> Result<(LossBreakdown, Vec<f64>), NeuralError> {
    if samples.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let scale = 1.0 / samples.len() as f64;
    let chunks: Vec<&[&Sample]> = samples.chunks(GRAD_CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| -> Result<(LossBreakdown, Vec<f64>), NeuralError> {
        let mut g = vec![0.0; params.len()];
        let mut acc = LossBreakdown { total: 0.0, per_branch: vec![0.0; weights.len()] };
        for s in chunk.iter() {
            let fwd = net.forward_with(params, &s.input)?;
            let l = sample_loss(net, &fwd.outputs, &s.targets, weights)?;
            acc.total += l.total;
            acc.per_branch.iter_mut().zip(&l.per_branch).for_each(|(a, b)| *a += b);
            let og = output_grads(&fwd.outputs, &s.targets, weights, scale);
            net.backward_with(params, &fwd, &og, &mut g)?;
        }
        Ok((acc, g))
    });
    let mut grad = vec![0.0; params.len()];
    let mut loss = LossBreakdown { total: 0.0, per_branch: vec![0.0; weights.len()] };
    for r in partial {
        let (l, g) = r?;
        loss.total += l.total;
        loss.per_branch.iter_mut().zip(&l.per_branch).for_each(|(a, b)| *a += b);
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    loss.total *= scale;
    loss.per_branch.iter_mut().for_each(|v| *v *= scale);
    Ok((loss, grad))
}

/// Mean loss over `samples` without gradients.
pub fn mean_loss(net: &Network, samples: &[&Sample], weights: &[f64], exec: Execution) -> Result<LossBreakdown, NeuralError> {
    if samples.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let chunks: Vec<&[&Sample]> = samples.chunks(GRAD_CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| -> Result<LossBreakdown, NeuralError> {
        let mut acc = LossBreakdown { total: 0.0, per_branch: vec![0.0; weights.len()] };
        for s in chunk.iter() {
            let out = net.forward(&s.input)?;
            let l = sample_loss(net, &out, &s.targets, weights)?;
            acc.total += l.total;
            acc.per_branch.iter_mut().zip(&l.per_branch).for_each(|(a, b)| *a += b);
        }
        Ok(acc)
    });
    let mut loss = LossBreakdown { total: 0.0, per_branch: vec![0.0; weights.len()] };
    for r in partial {
        let l = r?;
        loss.total += l.total;
        loss.per_branch.iter_mut().zip(&l.per_branch).for_each(|(a, b)| *a += b);
    }
    let n = samples.len() as f64;
    loss.total /= n;
    loss.per_branch.iter_mut().for_each(|v| *v /= n);
    Ok(loss)
}
