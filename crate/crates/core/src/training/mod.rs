//! Objective, optimizer, training loop, evaluation and ablations.

mod ablation;
mod adam;
mod config;
mod evaluate;
mod loss;
mod trainer;

pub use ablation::{run_ablation, AblationRow, AblationTable, Variant};
pub use adam::{adam_step, clip_gradients, AdamState};
pub use config::TrainConfig;
pub use evaluate::{evaluate, predict_windows, split_loss, EvalReport, DEFAULT_HORIZON_STEPS};
pub use loss::{mae_loss, mae_loss_value};
pub use trainer::{train, EpochRecord, TrainOutcome, CHECKPOINT_FILE, HISTORY_FILE};

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter {name} at flat index {index}")]
    NonFiniteGradient { name: String, index: usize },
    #[error("non-finite training loss in epoch {epoch}; the best checkpoint so far is kept")]
    NonFiniteLoss { epoch: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(ModelError::Numerics(e))
    }
}
