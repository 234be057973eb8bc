//! Multi-task force and position inference from flux windows.
//!
//! One network with a shared window input and three heads: shear-force
//! regression, normal-force regression and contact-position classification.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{
    simulate_indentation, simulate_shear, ActuatorError, ActuatorParams, DepthProfile, GridKind, GridPoint,
    ShearProfile, TimeSeriesRecord, POSITION_CLASSES,
};
use crate::decoupler::{decouple_record, DecouplerError, DecouplerModel};
use crate::neural::{
    mean_loss, train, Activation, Architecture, BranchInput, BranchSpec, LayerSpec, NeuralError, Network, OutputKind,
    Sample, Scaler, Target, TrainConfig, TrainedModel,
};
use crate::par::Execution;
use crate::seed::SeedTree;
use crate::sigproc::FilterSpec;

pub const SHEAR_BRANCH: usize = 0;
pub const NORMAL_BRANCH: usize = 1;
pub const POSITION_BRANCH: usize = 2;

#[derive(Debug, Error)]
pub enum TactileError {
    #[error("position class {class} has only {windows} contact windows (need 3)")]
    InsufficientData { class: usize, windows: usize },
    #[error("invalid tactile configuration: {0}")]
    InvalidConfig(String),
    #[error("window has {got} frames, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("model is not a trained multi-task model: {0}")]
    NotMultiTask(String),
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Decoupler(Box<DecouplerError>),
}

impl From<DecouplerError> for TactileError {
    fn from(e: DecouplerError) -> Self {
        TactileError::Decoupler(Box::new(e))
    }
}

/// Indentation protocol used to generate the grid dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridProtocol {
    pub sample_rate: f64,
    pub max_depth_mm: f64,
    pub period_s: f64,
    pub cycles: usize,
    pub lead_s: f64,
    pub tail_s: f64,
    /// Include the 3×3 shear grid.
    pub shear: bool,
    pub shear_compression_mm: f64,
    pub shear_amplitude_mm: f64,
    pub shear_settle_s: f64,
}

impl Default for GridProtocol {
    fn default() -> Self {
        Self {
            sample_rate: 50.0,
            max_depth_mm: 2.5,
            period_s: 2.0,
            cycles: 16,
            lead_s: 1.0,
            tail_s: 1.0,
            shear: true,
            shear_compression_mm: 1.5,
            shear_amplitude_mm: 1.0,
            shear_settle_s: 1.0,
        }
    }
}

impl GridProtocol {
    pub fn validate(&self) -> Result<(), TactileError> {
        let bad = |m: &str| Err(TactileError::InvalidConfig(m.to_string()));
        if self.cycles == 0 {
            return bad("grid protocol needs at least one cycle");
        }
        if !(self.max_depth_mm > 0.0) || !(self.period_s > 0.0) {
            return bad("indentation depth and period must be > 0");
        }
        if !(self.shear_compression_mm >= 0.0) || !(self.shear_amplitude_mm >= 0.0) {
            return bad("shear compression and amplitude must be >= 0");
        }
        if !(self.lead_s >= 0.0 && self.tail_s >= 0.0 && self.shear_settle_s >= 0.0) {
            return bad("lead, tail and settle durations must be >= 0");
        }
        Ok(())
    }

    fn frames(&self, s: f64) -> usize {
        (s * self.sample_rate).round() as usize
    }

    /// Indentation cycle a frame belongs to; lead and tail frames join the first and last cycle.
    fn cycle_of(&self, kind: GridKind, k: usize) -> usize {
        let (lead, per) = match kind {
            GridKind::Normal => (self.frames(self.lead_s), self.frames(self.period_s).max(2)),
            GridKind::Shear => (self.frames(self.shear_settle_s).max(1), self.frames(self.period_s).max(2)),
        };
        (k.saturating_sub(lead) / per).min(self.cycles - 1)
    }
}

#[derive(Debug, Clone)]
pub struct GridRecord {
    pub point: GridPoint,
    pub record: TimeSeriesRecord,
}

#[derive(Debug, Clone)]
pub struct GridSimulation {
    pub protocol: GridProtocol,
    pub records: Vec<GridRecord>,
}

/// Simulates every normal-grid point (and optionally the shear grid) with seeds from `seeds`.
pub fn simulate_grid(
    params: &ActuatorParams,
    protocol: &GridProtocol,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<GridSimulation, TactileError> {
    protocol.validate()?;
    let depth = DepthProfile::cyclic(
        protocol.max_depth_mm,
        protocol.period_s,
        protocol.cycles,
        protocol.lead_s,
        protocol.tail_s,
        protocol.sample_rate,
    )?;
    let mut points = GridPoint::all(GridKind::Normal);
    let shear = if protocol.shear {
        points.extend(GridPoint::all(GridKind::Shear));
        Some(ShearProfile::cyclic(
            protocol.shear_compression_mm,
            protocol.shear_amplitude_mm,
            protocol.period_s,
            protocol.cycles,
            protocol.shear_settle_s,
            protocol.sample_rate,
        )?)
    } else {
        None
    };
    let records = exec
        .map(&points, |&point| -> Result<GridRecord, ActuatorError> {
            let record = match point.kind {
                GridKind::Normal => {
                    simulate_indentation(point, &depth, params, seeds.derive(&format!("grid/normal/{}", point.class_index())))?
                }
                GridKind::Shear => simulate_shear(
                    point,
                    shear.as_ref().expect("shear profile built when shear points exist"),
                    params,
                    seeds.derive(&format!("grid/shear/{}/{}", point.row, point.col)),
                )?,
            };
            Ok(GridRecord { point, record })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridSimulation { protocol: protocol.clone(), records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TactileConfig {
    /// Frames per window.
    pub window: usize,
    /// Coprime with the indentation period so windows end at every cycle phase.
    pub stride: usize,
    /// Windows whose final normal force is below this fraction of the record peak get no position label.
    pub contact_fraction: f64,
    pub dense_widths: Vec<usize>,
    pub lstm_hidden: usize,
    pub classes: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self {
            window: 20,
            stride: 17,
            contact_fraction: 0.2,
            dense_widths: vec![64, 32],
            lstm_hidden: 32,
            classes: POSITION_CLASSES,
            split: [0.70, 0.15, 0.15],
            train: TrainConfig { learning_rate: 5e-3, loss_weights: vec![1.0, 1.0, 1.0], ..TrainConfig::default() },
            seed: 0,
        }
    }
}

impl TactileConfig {
    pub fn validate(&self) -> Result<(), TactileError> {
        let bad = |m: &str| Err(TactileError::InvalidConfig(m.to_string()));
        if self.window == 0 || self.stride == 0 || self.lstm_hidden == 0 || self.classes == 0 {
            return bad("window, stride, lstm_hidden and classes must be >= 1");
        }
        if self.dense_widths.is_empty() || self.dense_widths.contains(&0) {
            return bad("dense widths must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.contact_fraction) {
            return bad("contact_fraction must lie in [0, 1)");
        }
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be positive and sum to 1");
        }
        self.train.validate(3)?;
        Ok(())
    }
}

/// Shared-input network: two dense regression heads and an LSTM → dense → softmax position head.
pub fn multitask_architecture(window: usize, classes: usize, widths: &[usize], lstm_hidden: usize) -> Architecture {
    let head = |name: &str| {
        let mut layers = Vec::new();
        let mut fan_in = window * 3;
        for &w in widths {
            layers.push(LayerSpec::dense(fan_in, w, Activation::Relu));
            fan_in = w;
        }
        layers.push(LayerSpec::dense(fan_in, 1, Activation::Linear));
        BranchSpec { name: name.into(), input: BranchInput::Flat, layers, output: OutputKind::Regression }
    };
    let position = BranchSpec {
        name: "position".into(),
        input: BranchInput::Sequence,
        layers: vec![
            LayerSpec::lstm(3, lstm_hidden),
            LayerSpec::dense(lstm_hidden, classes, Activation::Linear),
            LayerSpec::softmax(classes),
        ],
        output: OutputKind::Classification,
    };
    Architecture { steps: window, features: 3, branches: vec![head("shear"), head("normal"), position] }
}

/// Untrained multi-task network with uniform fan-in initialisation.
pub fn build_multitask(
    window: usize,
    classes: usize,
    widths: &[usize],
    lstm_hidden: usize,
    seed: u64,
) -> Result<Network, TactileError> {
    Ok(Network::new(multitask_architecture(window, classes, widths, lstm_hidden), seed)?)
}

/// One labelled window of (possibly decoupled) flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileSample {
    /// Stable across dataset reorderings.
    pub id: u64,
    /// Windows of one indentation cycle share a group and always land in the same split.
    pub group: u64,
    /// Position class of the record; used for stratification.
    pub stratum: usize,
    pub window: Vec<[f64; 3]>,
    /// Tangential force magnitude, N.
    pub shear: f64,
    /// Normal force, N.
    pub normal: f64,
    /// `None` for baseline and light-contact windows.
    pub class: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TactileSplit {
    pub train: Vec<TactileSample>,
    pub validation: Vec<TactileSample>,
    pub test: Vec<TactileSample>,
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn record_key(point: GridPoint) -> u64 {
    let kind = match point.kind {
        GridKind::Normal => 0,
        GridKind::Shear => 1,
    };
    (kind << 16) | ((point.row as u64) << 8) | point.col as u64
}

/// Sliding windows over every grid record, optionally decoupled first.
pub fn make_dataset(
    grid: &GridSimulation,
    decoupler: Option<&DecouplerModel>,
    filter: &FilterSpec,
    config: &TactileConfig,
) -> Result<Vec<TactileSample>, TactileError> {
    config.validate()?;
    let mut samples = Vec::new();
    for gr in &grid.records {
        let flux: Vec<[f64; 3]> = match decoupler {
            Some(d) => decouple_record(&gr.record, d, filter)?.iter().map(|b| [b.x, b.y, b.z]).collect(),
            None => gr.record.frames().iter().map(|f| [f.flux.x, f.flux.y, f.flux.z]).collect(),
        };
        let frames = gr.record.frames();
        let peak = frames.iter().map(|f| f.normal_force()).fold(0.0, f64::max);
        let key = record_key(gr.point);
        let mut end = config.window;
        while end <= frames.len() {
            let last = &frames[end - 1];
            let normal = last.normal_force();
            let class = (peak > 0.0 && normal >= config.contact_fraction * peak).then(|| gr.point.class_index());
            let cycle = grid.protocol.cycle_of(gr.point.kind, end - 1) as u64;
            samples.push(TactileSample {
                id: (key << 32) | (end - 1) as u64,
                group: (key << 32) | cycle,
                stratum: gr.point.class_index(),
                window: flux[end - config.window..end].to_vec(),
                shear: last.shear_force(),
                normal,
                class,
            });
            end += config.stride;
        }
    }
    for class in 0..config.classes {
        let n = samples.iter().filter(|s| s.class == Some(class)).count();
        if n > 0 && n < 3 {
            return Err(TactileError::InsufficientData { class, windows: n });
        }
    }
    if !samples.iter().any(|s| s.class.is_some()) {
        return Err(TactileError::InsufficientData { class: 0, windows: 0 });
    }
    Ok(samples)
}

/// Stratified split by position class at the level of indentation cycles.
///
/// Membership depends only on `seed` and the sample ids, never on input order.
pub fn stratified_split(samples: &[TactileSample], fractions: [f64; 3], seed: u64) -> TactileSplit {
    let mut strata: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for s in samples {
        let groups = strata.entry(s.stratum).or_default();
        if !groups.contains(&s.group) {
            groups.push(s.group);
        }
    }
    let mut assignment: BTreeMap<u64, usize> = BTreeMap::new();
    for groups in strata.values_mut() {
        groups.sort_by_key(|g| (mix(seed ^ mix(*g)), *g));
        let n = groups.len();
        let mut n_val = ((fractions[1] * n as f64).round() as usize).max(1);
        let mut n_test = ((fractions[2] * n as f64).round() as usize).max(1);
        while n_val + n_test >= n && (n_val > 1 || n_test > 1) {
            if n_val >= n_test {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        for (i, g) in groups.iter().enumerate() {
            let split = if i < n_test {
                2
            } else if i < n_test + n_val {
                1
            } else {
                0
            };
            assignment.insert(*g, split);
        }
    }
    let mut out = TactileSplit::default();
    let mut sorted: Vec<&TactileSample> = samples.iter().collect();
    sorted.sort_by_key(|s| s.id);
    for s in sorted {
        match assignment[&s.group] {
            0 => out.train.push(s.clone()),
            1 => out.validation.push(s.clone()),
            _ => out.test.push(s.clone()),
        }
    }
    out
}

/// Scaled outputs of one forward pass plus their values in N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskOutput {
    pub shear_scaled: f64,
    pub normal_scaled: f64,
    pub shear_n: f64,
    pub normal_n: f64,
    pub probabilities: Vec<f64>,
    /// Set when any flux value fell outside the training range and was clamped.
    pub clamped: bool,
}

impl MultiTaskOutput {
    pub fn position(&self) -> usize {
        argmax(&self.probabilities)
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc }).0
}

/// A trained multi-task network and its scalers (`flux`, `shear`, `normal`).
#[derive(Debug, Clone, PartialEq)]
pub struct TactileModel {
    pub model: TrainedModel,
}

impl TactileModel {
    pub fn new(model: TrainedModel) -> Result<Self, TactileError> {
        let arch = model.network.architecture();
        if arch.branches.len() != 3 || arch.features != 3 {
            return Err(TactileError::NotMultiTask("expected three heads over 3-axis flux".into()));
        }
        for name in ["flux", "shear", "normal"] {
            model.scaler(name)?;
        }
        Ok(Self { model })
    }

    pub fn window(&self) -> usize {
        self.model.network.architecture().steps
    }

    pub fn classes(&self) -> usize {
        self.model.network.architecture().branches[POSITION_BRANCH].output_width()
    }

    fn encode(&self, window: &[[f64; 3]]) -> Result<(Vec<f64>, bool), TactileError> {
        if window.len() != self.window() {
            return Err(TactileError::WindowLength { expected: self.window(), got: window.len() });
        }
        let scaler = self.model.scaler("flux")?;
        let mut clamped = false;
        let mut x = Vec::with_capacity(window.len() * 3);
        for f in window {
            let (v, c) = scaler.transform_clamped(f);
            clamped |= c;
            x.extend(v);
        }
        Ok((x, clamped))
    }

    pub fn infer(&self, window: &[[f64; 3]]) -> Result<MultiTaskOutput, TactileError> {
        let (x, clamped) = self.encode(window)?;
        let mut y = self.model.network.forward(&x)?;
        let probabilities = y.pop().expect("three heads");
        let normal_scaled = y[NORMAL_BRANCH][0];
        let shear_scaled = y[SHEAR_BRANCH][0];
        Ok(MultiTaskOutput {
            shear_scaled,
            normal_scaled,
            shear_n: self.model.scaler("shear")?.inverse_transform(&[shear_scaled])[0],
            normal_n: self.model.scaler("normal")?.inverse_transform(&[normal_scaled])[0],
            probabilities,
            clamped,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TactileError> {
        Ok(self.model.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TactileError> {
        Self::new(TrainedModel::load(path)?)
    }
}

/// Held-out metrics in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileMetrics {
    pub total_loss: f64,
    pub shear_mse: f64,
    pub shear_mae: f64,
    pub normal_mse: f64,
    pub normal_mae: f64,
    pub position_accuracy: f64,
    pub windows: usize,
    pub classified_windows: usize,
}

fn fit_scalers(train: &[TactileSample]) -> Result<[Scaler; 3], TactileError> {
    let flux = Scaler::fit(train.iter().flat_map(|s| s.window.iter().map(|f| f.as_slice())), 3, -1.0, 1.0)?;
    let shear: Vec<[f64; 1]> = train.iter().map(|s| [s.shear]).collect();
    let normal: Vec<[f64; 1]> = train.iter().map(|s| [s.normal]).collect();
    Ok([
        flux,
        Scaler::fit(shear.iter().map(|v| v.as_slice()), 1, 0.0, 1.0)?,
        Scaler::fit(normal.iter().map(|v| v.as_slice()), 1, 0.0, 1.0)?,
    ])
}

fn to_sample(s: &TactileSample, scalers: &[Scaler; 3]) -> Sample {
    let input = s.window.iter().flat_map(|f| scalers[0].transform(f)).collect();
    Sample {
        input,
        targets: vec![
            Target::Values(scalers[1].transform(&[s.shear])),
            Target::Values(scalers[2].transform(&[s.normal])),
            s.class.map_or(Target::Skip, Target::Class),
        ],
    }
}

/// Evaluates a model on labelled windows.
pub fn evaluate(model: &TactileModel, samples: &[TactileSample], weights: &[f64], exec: Execution) -> Result<TactileMetrics, TactileError> {
    if samples.is_empty() {
        return Err(NeuralError::EmptyDataset.into());
    }
    let scalers = [model.model.scaler("flux")?.clone(), model.model.scaler("shear")?.clone(), model.model.scaler("normal")?.clone()];
    let encoded: Vec<Sample> = samples.iter().map(|s| to_sample(s, &scalers)).collect();
    let refs: Vec<&Sample> = encoded.iter().collect();
    let total_loss = mean_loss(&model.model.network, &refs, weights, exec)?.total;
    let outputs = exec.map(&encoded, |s| model.model.network.forward(&s.input));
    let (mut se_s, mut ae_s, mut se_n, mut ae_n, mut hits, mut classified) = (0.0, 0.0, 0.0, 0.0, 0, 0);
    for (s, y) in encoded.iter().zip(outputs) {
        let y = y?;
        if let [Target::Values(ts), Target::Values(tn), tc] = s.targets.as_slice() {
            let (ds, dn) = (y[SHEAR_BRANCH][0] - ts[0], y[NORMAL_BRANCH][0] - tn[0]);
            se_s += ds * ds;
            ae_s += ds.abs();
            se_n += dn * dn;
            ae_n += dn.abs();
            if let Target::Class(c) = tc {
                classified += 1;
                hits += usize::from(argmax(&y[POSITION_BRANCH]) == *c);
            }
        }
    }
    let n = samples.len() as f64;
    Ok(TactileMetrics {
        total_loss,
        shear_mse: se_s / n,
        shear_mae: ae_s / n,
        normal_mse: se_n / n,
        normal_mae: ae_n / n,
        position_accuracy: if classified > 0 { hits as f64 / classified as f64 } else { 0.0 },
        windows: samples.len(),
        classified_windows: classified,
    })
}

#[derive(Debug, Clone)]
pub struct TactileTraining {
    pub model: TactileModel,
    pub metrics: TactileMetrics,
}

/// Splits, scales, trains with early stopping on the validation split and scores the test split.
pub fn train_multitask(
    samples: &[TactileSample],
    config: &TactileConfig,
    exec: Execution,
) -> Result<TactileTraining, TactileError> {
    config.validate()?;
    let split = stratified_split(samples, config.split, config.seed);
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(TactileError::InsufficientData { class: 0, windows: samples.len() });
    }
    let scalers = fit_scalers(&split.train)?;
    let train_set: Vec<Sample> = split.train.iter().map(|s| to_sample(s, &scalers)).collect();
    let val_set: Vec<Sample> = split.validation.iter().map(|s| to_sample(s, &scalers)).collect();
    let network = build_multitask(config.window, config.classes, &config.dense_widths, config.lstm_hidden, config.seed)?;
    let outcome = train(network, &train_set, &val_set, &config.train, exec)?;
    let mut trained = TrainedModel::new(outcome.network, config.seed);
    trained.history = outcome.history;
    trained.best_epoch = outcome.best_epoch;
    let [flux, shear, normal] = scalers;
    trained.scalers.insert("flux".into(), flux);
    trained.scalers.insert("shear".into(), shear);
    trained.scalers.insert("normal".into(), normal);
    let model = TactileModel::new(trained)?;
    let metrics = evaluate(&model, &split.test, &config.train.loss_weights, exec)?;
    Ok(TactileTraining { model, metrics })
}
