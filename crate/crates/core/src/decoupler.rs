//! Per-actuator pressure-to-flux model and parasitic subtraction.
//!
//! Each actuator gets its own small MLP mapping filtered pressure to the flux
//! its own deformation induces at the sensor. Subtracting that prediction from
//! the raw reading leaves the contact-induced part for the tactile model.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{simulate_free_actuation, ActuatorError, ActuatorParams, PressureProfile, TimeSeriesRecord};
use crate::magnetics::FluxSample;
use crate::neural::{
    split_validation, train, Activation, Architecture, BranchInput, BranchSpec, LayerSpec, NeuralError, Network,
    OutputKind, Sample, Scaler, Target, TrainConfig, TrainedModel,
};
use crate::par::Execution;
use crate::sigproc::{design_cheby1, filter_signal, FilterSpec, FilterState, SigprocError};
use crate::tactile::{MultiTaskOutput, TactileError, TactileModel};

#[derive(Debug, Error)]
pub enum DecouplerError {
    #[error("decoupler has not been trained")]
    UntrainedModel,
    #[error("invalid sweep or model configuration: {0}")]
    InvalidConfig(String),
    #[error("sweep dataset is too small: {0} pairs")]
    TooFewPairs(usize),
    #[error("record and pressure streams differ in length: {flux} vs {pressure}")]
    LengthMismatch { flux: usize, pressure: usize },
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Sigproc(#[from] SigprocError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
}

/// Quasi-static acquisition protocol for decoupler training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub peak_kpa: f64,
    pub step_kpa: f64,
    pub repetitions: usize,
    /// Time spent at each level; the last frame of the dwell is kept.
    pub dwell_s: f64,
    pub sample_rate: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { peak_kpa: 35.0, step_kpa: 0.1, repetitions: 5, dwell_s: 1.0, sample_rate: 50.0 }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), DecouplerError> {
        if !(self.peak_kpa > 0.0 && self.step_kpa > 0.0 && self.dwell_s > 0.0) || self.step_kpa > self.peak_kpa {
            return Err(DecouplerError::InvalidConfig("sweep needs 0 < step <= peak and a positive dwell".into()));
        }
        if self.repetitions < 2 {
            return Err(DecouplerError::InvalidConfig("at least 2 repetitions are needed".into()));
        }
        Ok(())
    }

    /// Commanded levels: up from 0 to the peak, then back down, per repetition.
    pub fn levels(&self) -> Vec<f64> {
        let n = (self.peak_kpa / self.step_kpa).round() as usize;
        let up = (0..=n).map(|i| (i as f64 * self.step_kpa).min(self.peak_kpa));
        let down = (0..n).rev().map(|i| i as f64 * self.step_kpa);
        let one: Vec<f64> = up.chain(down).collect();
        one.iter().copied().cycle().take(one.len() * self.repetitions).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPair {
    /// Filtered pressure, kPa.
    pub pressure: f64,
    /// Flux, G.
    pub flux: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    pub actuator_id: String,
    pub config: SweepConfig,
    pub pairs: Vec<SweepPair>,
}

/// Runs the no-contact staircase sweep and pairs each dwell's final filtered pressure with its flux.
pub fn generate_sweep_dataset(
    params: &ActuatorParams,
    actuator_id: &str,
    config: &SweepConfig,
    filter: &FilterSpec,
    seed: u64,
) -> Result<SweepDataset, DecouplerError> {
    config.validate()?;
    let profile = sweep_profile(config)?;
    let record = simulate_free_actuation(&profile, params, seed)?;
    sweep_dataset_from_record(&record, actuator_id, config, filter)
}

/// Staircase command profile of a sweep.
pub fn sweep_profile(config: &SweepConfig) -> Result<PressureProfile, DecouplerError> {
    Ok(PressureProfile::staircase(&config.levels(), config.dwell_s, config.sample_rate)?)
}

/// Extracts sweep pairs from a recorded staircase run laid out as [`sweep_profile`].
pub fn sweep_dataset_from_record(
    record: &TimeSeriesRecord,
    actuator_id: &str,
    config: &SweepConfig,
    filter: &FilterSpec,
) -> Result<SweepDataset, DecouplerError> {
    config.validate()?;
    let levels = config.levels().len();
    let dwell = (config.dwell_s * record.sample_rate()).round() as usize;
    if dwell == 0 || record.len() != levels * dwell {
        return Err(DecouplerError::InvalidConfig(format!(
            "record has {} frames, sweep layout needs {} levels x {} frames",
            record.len(),
            levels,
            dwell
        )));
    }
    let sos = design_cheby1(&FilterSpec { sample_rate_hz: record.sample_rate(), ..*filter })?;
    let filtered = filter_signal(&record.pressures(), &sos);
    let pairs = (0..levels)
        .map(|i| {
            let k = (i + 1) * dwell - 1;
            let b = record.frames()[k].flux;
            SweepPair { pressure: filtered[k].clamp(0.0, config.peak_kpa), flux: [b.x, b.y, b.z] }
        })
        .collect();
    Ok(SweepDataset { actuator_id: actuator_id.to_string(), config: *config, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecouplerConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Initialisation seed.
    pub seed: u64,
}

impl Default for DecouplerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            train: TrainConfig { max_epochs: 200, validation_split: 0.1, ..TrainConfig::default() },
            seed: 0,
        }
    }
}

/// `1 → hidden… → 3` MLP with ReLU hidden layers and a linear output.
pub fn decoupler_architecture(hidden: &[usize]) -> Architecture {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut fan_in = 1;
    for &h in hidden {
        layers.push(LayerSpec::dense(fan_in, h, Activation::Relu));
        fan_in = h;
    }
    layers.push(LayerSpec::dense(fan_in, 3, Activation::Linear));
    Architecture {
        steps: 1,
        features: 1,
        branches: vec![BranchSpec { name: "flux".into(), input: BranchInput::Flat, layers, output: OutputKind::Regression }],
    }
}

/// A trained pressure-to-flux model for one actuator.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplerModel {
    pub model: TrainedModel,
}

impl DecouplerModel {
    /// Randomly initialised and unusable until trained.
    pub fn untrained(actuator_id: &str, hidden: &[usize], seed: u64) -> Result<Self, DecouplerError> {
        let mut model = TrainedModel::new(Network::new(decoupler_architecture(hidden), seed)?, seed);
        model.actuator_id = Some(actuator_id.to_string());
        Ok(Self { model })
    }

    pub fn is_trained(&self) -> bool {
        !self.model.history.is_empty() && self.model.scalers.contains_key("pressure")
    }

    pub fn actuator_id(&self) -> Option<&str> {
        self.model.actuator_id.as_deref()
    }

    /// Predicted actuation-induced flux at filtered pressure `pressure`, plus whether the input was clamped.
    pub fn predict(&self, pressure: f64) -> Result<(Vector3<f64>, bool), DecouplerError> {
        if !self.is_trained() {
            return Err(DecouplerError::UntrainedModel);
        }
        let (x, clamped) = self.model.scaler("pressure")?.transform_clamped(&[pressure]);
        let y = self.model.network.forward(&x)?;
        let b = self.model.scaler("flux")?.inverse_transform(&y[0]);
        Ok((Vector3::new(b[0], b[1], b[2]), clamped))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DecouplerError> {
        Ok(self.model.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DecouplerError> {
        Ok(Self { model: TrainedModel::load(path)? })
    }
}

/// Fits the decoupler MLP to a sweep, holding out `validation_split` for early stopping.
pub fn train_decoupler(
    dataset: &SweepDataset,
    config: &DecouplerConfig,
    exec: Execution,
) -> Result<DecouplerModel, DecouplerError> {
    if dataset.pairs.len() < 4 {
        return Err(DecouplerError::TooFewPairs(dataset.pairs.len()));
    }
    let pressures: Vec<[f64; 1]> = dataset.pairs.iter().map(|p| [p.pressure]).collect();
    let p_scaler = Scaler::fit(pressures.iter().map(|p| p.as_slice()), 1, -1.0, 1.0)?;
    let f_scaler = Scaler::fit(dataset.pairs.iter().map(|p| p.flux.as_slice()), 3, -1.0, 1.0)?;
    let samples: Vec<Sample> = dataset
        .pairs
        .iter()
        .map(|p| Sample {
            input: p_scaler.transform(&[p.pressure]),
            targets: vec![Target::Values(f_scaler.transform(&p.flux))],
        })
        .collect();
    let (train_set, val_set) = split_validation(samples, &config.train)?;
    let network = Network::new(decoupler_architecture(&config.hidden), config.seed)?;
    let outcome = train(network, &train_set, &val_set, &config.train, exec)?;
    let mut model = TrainedModel::new(outcome.network, config.seed);
    model.history = outcome.history;
    model.best_epoch = outcome.best_epoch;
    model.actuator_id = Some(dataset.actuator_id.clone());
    model.scalers.insert("pressure".into(), p_scaler);
    model.scalers.insert("flux".into(), f_scaler);
    Ok(DecouplerModel { model })
}

/// Root-mean-square prediction error per axis over a sweep, G.
pub fn sweep_rmse(model: &DecouplerModel, dataset: &SweepDataset) -> Result<[f64; 3], DecouplerError> {
    let mut acc = [0.0; 3];
    for p in &dataset.pairs {
        let (b, _) = model.predict(p.pressure)?;
        for k in 0..3 {
            acc[k] += (b[k] - p.flux[k]).powi(2);
        }
    }
    let n = dataset.pairs.len() as f64;
    Ok(acc.map(|s| (s / n).sqrt()))
}

/// `B − MLP(P)` for one frame.
pub fn decouple(flux: &FluxSample, pressure: f64, model: &DecouplerModel) -> Result<FluxSample, DecouplerError> {
    let (pred, _) = model.predict(pressure)?;
    Ok(FluxSample { t: flux.t, b: flux.b - pred })
}

/// Decoupled flux for every frame of a record, filtering its pressure stream causally first.
pub fn decouple_record(
    record: &TimeSeriesRecord,
    model: &DecouplerModel,
    filter: &FilterSpec,
) -> Result<Vec<Vector3<f64>>, DecouplerError> {
    let sos = design_cheby1(&FilterSpec { sample_rate_hz: record.sample_rate(), ..*filter })?;
    let pressure = filter_signal(&record.pressures(), &sos);
    record.frames().iter().zip(pressure).map(|(f, p)| Ok(f.flux - model.predict(p)?.0)).collect()
}

/// Streaming decoupling followed by the tactile model; emits once the window is full.
#[derive(Debug, Clone)]
pub struct DecoupledInference<'a> {
    decoupler: Option<&'a DecouplerModel>,
    tactile: &'a TactileModel,
    filter: FilterState,
    window: VecDeque<[f64; 3]>,
}

impl<'a> DecoupledInference<'a> {
    /// `decoupler = None` passes raw flux through, for comparison runs.
    pub fn new(
        decoupler: Option<&'a DecouplerModel>,
        tactile: &'a TactileModel,
        filter: &FilterSpec,
        sample_rate: f64,
    ) -> Result<Self, DecouplerError> {
        if let Some(d) = decoupler {
            if !d.is_trained() {
                return Err(DecouplerError::UntrainedModel);
            }
        }
        let sos = design_cheby1(&FilterSpec { sample_rate_hz: sample_rate, ..*filter })?;
        Ok(Self { decoupler, tactile, filter: sos.stream(), window: VecDeque::with_capacity(tactile.window()) })
    }

    pub fn step(&mut self, flux: Vector3<f64>, pressure: f64) -> Result<Option<MultiTaskOutput>, DecouplerError> {
        let p = self.filter.step(pressure);
        let b = match self.decoupler {
            Some(d) => flux - d.predict(p)?.0,
            None => flux,
        };
        if self.window.len() == self.tactile.window() {
            self.window.pop_front();
        }
        self.window.push_back([b.x, b.y, b.z]);
        if self.window.len() < self.tactile.window() {
            return Ok(None);
        }
        Ok(Some(self.tactile.infer(self.window.make_contiguous())?))
    }
}

/// Runs [`DecoupledInference`] over a whole record; the first `window − 1` frames have no output.
pub fn decoupled_inference(
    record: &TimeSeriesRecord,
    decoupler: Option<&DecouplerModel>,
    tactile: &TactileModel,
    filter: &FilterSpec,
) -> Result<Vec<Option<MultiTaskOutput>>, DecouplerError> {
    let mut stream = DecoupledInference::new(decoupler, tactile, filter, record.sample_rate())?;
    record.frames().iter().map(|f| stream.step(f.flux, f.pressure)).collect()
}
