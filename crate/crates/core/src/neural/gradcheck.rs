//! Central-difference verification of backpropagated gradients.

use serde::{Deserialize, Serialize};

use super::loss::{output_grads, sample_loss, Sample};
use super::network::Network;
use super::NeuralError;
use crate::par;

/// Gradients below this magnitude are compared absolutely rather than relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error < tol
    }
}

/// `|a − n| / max(|a|, |n|, GRAD_FLOOR)`, maximised over parameters.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR))
        .enumerate()
        .fold((0.0, 0), |acc, (i, e)| if e > acc.0 { (e, i) } else { acc })
}

/// Analytic gradient of one sample's weighted loss.
pub fn analytic_gradient(net: &Network, sample: &Sample, weights: &[f64]) -> Result<Vec<f64>, NeuralError> {
    let fwd = net.forward_with(net.params(), &sample.input)?;
    let og = output_grads(&fwd.outputs, &sample.targets, weights, 1.0);
    net.backward(&fwd, &og)
}

/// Compares backpropagation with central differences of step `h` on every parameter.
pub fn finite_diff_check(net: &Network, sample: &Sample, weights: &[f64], h: f64) -> Result<GradCheckReport, NeuralError> {
    let analytic = analytic_gradient(net, sample, weights)?;
    let loss_at = |params: &[f64]| -> Result<f64, NeuralError> {
        let fwd = net.forward_with(params, &sample.input)?;
        Ok(sample_loss(net, &fwd.outputs, &sample.targets, weights)?.total)
    };
    let numeric: Vec<f64> = par::map_range(net.param_count(), |i| {
        let mut p = net.params().to_vec();
        let orig = p[i];
        p[i] = orig + h;
        let up = loss_at(&p)?;
        p[i] = orig - h;
        let down = loss_at(&p)?;
        Ok((up - down) / (2.0 * h))
    })
    .into_iter()
    .collect::<Result<_, NeuralError>>()?;
    let (max_relative_error, worst_param) = compare_gradients(&analytic, &numeric);
    Ok(GradCheckReport { max_relative_error, worst_param, analytic, numeric })
}
