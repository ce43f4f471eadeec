use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const METADATA_FILE: &str = "metadata.json";

/// Slots per day in the time-of-day embedding table.
pub const SLOTS_PER_DAY: usize = 48;
pub const DAYS_PER_WEEK: usize = 7;

/// Observations shaped `[modes, nodes, steps, channels]` on a regular time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiModeDataset {
    values: Tensor,
    pub start_timestamp: NaiveDateTime,
    pub step_minutes: u32,
    pub mode_names: Vec<String>,
    pub channel_names: Vec<String>,
}

/// On-disk `metadata.json` descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub version: u32,
    #[serde(rename = "M")]
    pub num_modes: usize,
    #[serde(rename = "N")]
    pub num_nodes: usize,
    #[serde(rename = "T")]
    pub num_steps: usize,
    #[serde(rename = "C")]
    pub num_channels: usize,
    pub mode_names: Vec<String>,
    pub channel_names: Vec<String>,
    pub start_timestamp: NaiveDateTime,
    pub step_minutes: u32,
}

impl MultiModeDataset {
    pub fn new(
        values: Tensor,
        start_timestamp: NaiveDateTime,
        step_minutes: u32,
        mode_names: Vec<String>,
        channel_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let shape = values.shape();
        if shape.len() != 4 {
            return Err(DataError::Invalid(format!(
                "values must be [modes, nodes, steps, channels], got {shape:?}"
            )));
        }
        if mode_names.len() != shape[0] || channel_names.len() != shape[3] {
            return Err(DataError::Invalid(format!(
                "{} mode names and {} channel names for shape {shape:?}",
                mode_names.len(),
                channel_names.len()
            )));
        }
        if step_minutes == 0 || (24 * 60) % step_minutes != 0 {
            return Err(DataError::Invalid(format!(
                "step_minutes {step_minutes} must divide a day"
            )));
        }
        for name in &mode_names {
            let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(DataError::Invalid(format!(
                    "mode name {name:?} must be nonempty and use only [A-Za-z0-9_-]"
                )));
            }
        }
        if let Some(i) = values.data().iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                what: "values".into(),
                index: i,
            });
        }
        Ok(Self {
            values,
            start_timestamp,
            step_minutes,
            mode_names,
            channel_names,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn num_steps(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn num_channels(&self) -> usize {
        self.values.shape()[3]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    #[inline]
    pub fn value(&self, mode: usize, node: usize, step: usize, channel: usize) -> f64 {
        let s = self.values.shape();
        self.values.data()[((mode * s[1] + node) * s[2] + step) * s[3] + channel]
    }

    /// Contiguous `[steps, channels]` series for one mode and node.
    pub fn series(&self, mode: usize, node: usize) -> &[f64] {
        let s = self.values.shape();
        let len = s[2] * s[3];
        let start = (mode * s[1] + node) * len;
        &self.values.data()[start..start + len]
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.start_timestamp + chrono::Duration::minutes(self.step_minutes as i64 * step as i64)
    }

    /// `(time_of_day_slot, day_of_week)` for a step index.
    pub fn time_features(&self, step: usize) -> (usize, usize) {
        time_features(self.timestamp(step))
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            version: FORMAT_VERSION,
            num_modes: self.num_modes(),
            num_nodes: self.num_nodes(),
            num_steps: self.num_steps(),
            num_channels: self.num_channels(),
            mode_names: self.mode_names.clone(),
            channel_names: self.channel_names.clone(),
            start_timestamp: self.start_timestamp,
            step_minutes: self.step_minutes,
        }
    }

    /// Writes `metadata.json` and one little-endian `<mode>.bin` per mode.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let meta = serde_json::to_string_pretty(&self.metadata()).map_err(|e| DataError::Invalid(e.to_string()))?;
        let meta_path = dir.join(METADATA_FILE);
        fs::write(&meta_path, meta + "\n").map_err(|e| DataError::io(&meta_path, e))?;
        for (m, name) in self.mode_names.iter().enumerate() {
            let mut bytes = Vec::with_capacity(self.num_nodes() * self.num_steps() * self.num_channels() * 8);
            for n in 0..self.num_nodes() {
                for v in self.series(m, n) {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            let path = dir.join(format!("{name}.bin"));
            fs::write(&path, bytes).map_err(|e| DataError::io(&path, e))?;
        }
        Ok(())
    }
}

/// Midnight is slot 0 of 48 half-hour slots; Monday is day 0.
pub fn time_features(ts: NaiveDateTime) -> (usize, usize) {
    let minute_of_day = ts.hour() as usize * 60 + ts.minute() as usize;
    let slot = minute_of_day * SLOTS_PER_DAY / (24 * 60);
    (slot, ts.weekday().num_days_from_monday() as usize)
}

/// Loads a dataset directory. Each mode is read from `<mode>.bin`, or from
/// `<mode>.csv` (header `node,time_index,channel,value`) when no binary exists.
pub fn load_dataset(dir: &Path) -> Result<MultiModeDataset, DataError> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| DataError::io(&meta_path, e))?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| DataError::Metadata {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    if meta.version != FORMAT_VERSION {
        return Err(DataError::Metadata {
            path: meta_path,
            message: format!("unsupported version {}", meta.version),
        });
    }
    if meta.mode_names.len() != meta.num_modes || meta.channel_names.len() != meta.num_channels {
        return Err(DataError::Metadata {
            path: meta_path,
            message: "mode_names/channel_names lengths disagree with M/C".into(),
        });
    }
    if [meta.num_modes, meta.num_nodes, meta.num_steps, meta.num_channels].contains(&0) {
        return Err(DataError::Metadata {
            path: meta_path,
            message: "M, N, T and C must be positive".into(),
        });
    }
    let per_mode = meta.num_nodes * meta.num_steps * meta.num_channels;
    let mut values = Vec::with_capacity(meta.num_modes * per_mode);
    for name in &meta.mode_names {
        let bin = dir.join(format!("{name}.bin"));
        let csv = dir.join(format!("{name}.csv"));
        let mode_values = if bin.exists() {
            read_bin(&bin, per_mode)?
        } else if csv.exists() {
            read_csv(&csv, &meta)?
        } else {
            return Err(DataError::MissingFile(bin));
        };
        values.extend(mode_values);
    }
    let tensor = Tensor::new(
        [meta.num_modes, meta.num_nodes, meta.num_steps, meta.num_channels],
        values,
    )
    .map_err(|e| DataError::Invalid(e.to_string()))?;
    if let Some(i) = tensor.data().iter().position(|v| !v.is_finite()) {
        let m = i / per_mode;
        return Err(DataError::NonFinite {
            what: format!("{}.bin", meta.mode_names[m]),
            index: i % per_mode,
        });
    }
    MultiModeDataset::new(
        tensor,
        meta.start_timestamp,
        meta.step_minutes,
        meta.mode_names,
        meta.channel_names,
    )
}

fn read_bin(path: &Path, expected: usize) -> Result<Vec<f64>, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(DataError::Shape {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() / 8,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn read_csv(path: &Path, meta: &Metadata) -> Result<Vec<f64>, DataError> {
    let (n, t, c) = (meta.num_nodes, meta.num_steps, meta.num_channels);
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let expected = ["node", "time_index", "channel", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DataError::Csv {
            path: path.to_path_buf(),
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut values = vec![f64::NAN; n * t * c];
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (line, record) in reader.deserialize::<(usize, usize, usize, f64)>().enumerate() {
        let (node, step, channel, value) = record.map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if node >= n || step >= t || channel >= c {
            return Err(DataError::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "row {} index ({node},{step},{channel}) outside N={n},T={t},C={c}",
                    line + 2
                ),
            });
        }
        let idx = (node * t + step) * c + channel;
        if seen.insert(idx, line).is_some() {
            return Err(DataError::Csv {
                path: path.to_path_buf(),
                message: format!("duplicate entry ({node},{step},{channel})"),
            });
        }
        values[idx] = value;
    }
    if seen.len() != values.len() {
        return Err(DataError::Shape {
            path: path.to_path_buf(),
            expected: values.len(),
            found: seen.len(),
        });
    }
    Ok(values)
}
