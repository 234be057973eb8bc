//! Self-describing JSON model documents.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, BranchInput, Network, OutputKind};
use super::scaler::Scaler;
use super::train::EpochRecord;
use super::{LayerSpec, NeuralError};

pub const FORMAT_VERSION: u32 = 1;

/// A network with its scalers and training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    /// Named scalers, for example `input` or `normal`.
    pub scalers: BTreeMap<String, Scaler>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seed: u64,
    pub actuator_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    spec: LayerSpec,
    /// Row-major weight matrix, one inner array per row.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    name: String,
    input: BranchInput,
    output: OutputKind,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actuator_id: Option<String>,
    seed: u64,
    steps: usize,
    features: usize,
    branches: Vec<BranchDoc>,
    scalers: BTreeMap<String, Scaler>,
    history: Vec<EpochRecord>,
    best_epoch: usize,
}

impl TrainedModel {
    pub fn new(network: Network, seed: u64) -> Self {
        Self { network, scalers: BTreeMap::new(), history: Vec::new(), best_epoch: 0, seed, actuator_id: None }
    }

    pub fn scaler(&self, name: &str) -> Result<&Scaler, NeuralError> {
        self.scalers.get(name).ok_or_else(|| NeuralError::MissingScaler(name.to_string()))
    }

    fn to_doc(&self) -> ModelDoc {
        let arch = self.network.architecture();
        let branches = arch
            .branches
            .iter()
            .enumerate()
            .map(|(bi, b)| BranchDoc {
                name: b.name.clone(),
                input: b.input,
                output: b.output,
                layers: b
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(li, l)| {
                        let p = self.network.layer_params(bi, li);
                        let (weights, split) = match l.weight_shape() {
                            Some((r, c)) => (p[..r * c].chunks(c).map(<[f64]>::to_vec).collect(), r * c),
                            None => (Vec::new(), 0),
                        };
                        LayerDoc { spec: *l, weights, biases: p[split..].to_vec() }
                    })
                    .collect(),
            })
            .collect();
        ModelDoc {
            format_version: FORMAT_VERSION,
            actuator_id: self.actuator_id.clone(),
            seed: self.seed,
            steps: arch.steps,
            features: arch.features,
            branches,
            scalers: self.scalers.clone(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        }
    }

    fn from_doc(doc: ModelDoc) -> Result<Self, NeuralError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(NeuralError::Format(format!("unsupported format_version {}", doc.format_version)));
        }
        let mut params = Vec::new();
        let mut branches = Vec::with_capacity(doc.branches.len());
        for b in doc.branches {
            let mut layers = Vec::with_capacity(b.layers.len());
            for l in b.layers {
                let (rows, cols) = l.spec.weight_shape().unwrap_or((0, 0));
                if l.weights.len() != rows || l.weights.iter().any(|r| r.len() != cols) {
                    return Err(NeuralError::Format(format!("layer weights in branch {} do not match spec", b.name)));
                }
                if l.biases.len() != l.spec.bias_len() {
                    return Err(NeuralError::Format(format!("layer biases in branch {} do not match spec", b.name)));
                }
                params.extend(l.weights.into_iter().flatten());
                params.extend(l.biases);
                layers.push(l.spec);
            }
            branches.push(super::BranchSpec { name: b.name, input: b.input, layers, output: b.output });
        }
        if doc.history.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return Err(NeuralError::Format("history epochs must increase".into()));
        }
        let arch = Architecture { steps: doc.steps, features: doc.features, branches };
        Ok(Self {
            network: Network::from_params(arch, params)?,
            scalers: doc.scalers,
            history: doc.history,
            best_epoch: doc.best_epoch,
            seed: doc.seed,
            actuator_id: doc.actuator_id,
        })
    }

    pub fn to_json(&self) -> Result<String, NeuralError> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self, NeuralError> {
        Self::from_doc(serde_json::from_str(s)?)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), NeuralError> {
        serde_json::to_writer_pretty(w, &self.to_doc())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, NeuralError> {
        Self::from_doc(serde_json::from_reader(r)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
