//! Training loop, evaluation, the ablation sweep and run outputs.

mod ablation;
mod config;
mod gradcheck;
mod metrics;
mod trainer;

use thiserror::Error;

use crate::autograd::AutogradError;
use crate::corpus::CorpusError;
use crate::kg::KgError;
use crate::model::ModelError;

pub use ablation::{run_ablations, AblationRow, AblationTable};
pub use config::{DataPaths, TrainConfig};
pub use gradcheck::{builtin_fixture, check_model_gradients};
pub use metrics::{score, ClassMetrics, Metrics};
pub use trainer::{
    epoch_order, evaluate, load_data, prepare_split, split_holdout, train, train_prepared, write_outputs,
    EpochSummary, EvalReport, LoadedData, LossRecord, TrainOutcome, Trainer,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite {what} at step {step} (epoch {epoch}); batch instance ids {ids:?}")]
    NonFinite {
        what: String,
        epoch: usize,
        step: u64,
        ids: Vec<usize>,
    },
}

impl From<AutogradError> for TrainError {
    fn from(e: AutogradError) -> Self {
        TrainError::Model(ModelError::Autograd(e))
    }
}

impl TrainError {
    /// Process exit code: 1 usage/configuration, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Config(_) | TrainError::Model(ModelError::Config(_)) => 1,
            TrainError::NonFinite { .. } | TrainError::Model(ModelError::Autograd(AutogradError::NonFinite(_))) => 3,
            _ => 2,
        }
    }
}
