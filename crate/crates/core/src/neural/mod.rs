//! Dense and LSTM networks trained with Adam, plus scaling, gradient checking and persistence.

mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod persist;
mod scaler;
mod train;

use thiserror::Error;

pub use gradcheck::{analytic_gradient, compare_gradients, finite_diff_check, GradCheckReport, GRAD_FLOOR};
pub use layers::{Activation, LayerKind, LayerSpec};
pub use loss::{
    batch_gradient, cross_entropy, mean_loss, mse, output_grads, sample_loss, LossBreakdown, Sample, Target, GRAD_CHUNK,
};
pub use network::{Architecture, BranchInput, BranchSpec, Forward, Network, OutputGrad, OutputKind};
pub use optim::Adam;
pub use persist::{TrainedModel, FORMAT_VERSION};
pub use scaler::Scaler;
pub use train::{split_validation, train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("target does not fit branch {0}")]
    TargetMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("model has no scaler named {0}")]
    MissingScaler(String),
    #[error("malformed model document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
