//! Mini-batch training with early stopping on validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{batch_gradient, mean_loss, Sample};
use super::network::Network;
use super::optim::Adam;
use super::NeuralError;
use crate::par::Execution;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Used when the caller asks for an internal train/validation split.
    pub validation_split: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// One weight per branch.
    pub loss_weights: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 32,
            patience: 10,
            validation_split: 0.1,
            learning_rate: 1e-3,
            clip_norm: 1.0,
            loss_weights: vec![1.0],
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, branches: usize) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidSpec(m.to_string()));
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("max_epochs and batch_size must be >= 1");
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return bad("validation_split must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be > 0");
        }
        if self.loss_weights.len() != branches || self.loss_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("need one non-negative loss weight per branch");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the best validation epoch.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains on `train`, early-stopping on `val`; returns the best-validation weights.
pub fn train(
    network: Network,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome, NeuralError> {
    config.validate(network.architecture().branches.len())?;
    if train.is_empty() || val.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let mut net = network;
    let mut rng = rng_from_seed(config.rng_seed);
    let mut adam = Adam::new(net.param_count(), config.learning_rate, Some(config.clip_norm));
    let val_refs: Vec<&Sample> = val.iter().collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = batch_gradient(&net, net.params(), &samples, &config.loss_weights, exec)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::NonFiniteLoss { epoch, loss: loss.total });
            }
            train_sum += loss.total * samples.len() as f64;
            adam.step(net.params_mut(), &grad)?;
        }
        let val_loss = mean_loss(&net, &val_refs, &config.loss_weights, exec)?.total;
        if !val_loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss { epoch, loss: val_loss });
        }
        history.push(EpochRecord { epoch, train_loss: train_sum / train.len() as f64, val_loss });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, net.params().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    net.set_params(params)?;
    Ok(TrainOutcome { network: net, history, best_epoch })
}

/// Seeded shuffle of `samples` into (train, validation) using `config.validation_split`.
pub fn split_validation(samples: Vec<Sample>, config: &TrainConfig) -> Result<(Vec<Sample>, Vec<Sample>), NeuralError> {
    if samples.len() < 2 {
        return Err(NeuralError::EmptyDataset);
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng_from_seed(config.rng_seed ^ 0x5eed_5917));
    let n_val = ((samples.len() as f64 * config.validation_split).round() as usize).clamp(1, samples.len() - 1);
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let val = idx[..n_val].iter().map(|&i| slots[i].take().unwrap()).collect();
    let train = idx[n_val..].iter().map(|&i| slots[i].take().unwrap()).collect();
    Ok((train, val))
}
