//! Datasets, chronological splits, forecasting windows, scaling and the
//! synthetic generator.

mod dataset;
mod scaler;
pub mod synthetic;
mod windows;

use std::path::{Path, PathBuf};

pub use dataset::{
    load_dataset, time_features, Metadata, MultiModeDataset, DAYS_PER_WEEK, FORMAT_VERSION, METADATA_FILE,
    SLOTS_PER_DAY,
};
pub use scaler::{Scaler, STD_FLOOR};
pub use synthetic::{generate_synthetic, Coupling, SyntheticConfig};
pub use windows::{chronological_split, make_windows, ForecastBatch, Split, SplitRanges, Window, DEFAULT_FRACTIONS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing data file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: invalid metadata: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("{path}: expected {expected} values, found {found}")]
    Shape {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{what}: non-finite value at flat index {index}")]
    NonFinite { what: String, index: usize },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
