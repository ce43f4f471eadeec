//! The multi-mode forecasting network.

pub mod checkpoint;
mod config;
pub mod layers;
mod network;
mod params;
pub mod relation;
mod scaling;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{pool_window, SimMstConfig, TdlKind};
pub(crate) use network::mode_slice;
pub use network::{stack_modes, ForwardPass, SimMst};
pub use params::{BoundParams, ParamId, ParamSet};
pub use scaling::{fit_power_law, scaling_report, ScalingPoint, ScalingReport};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
