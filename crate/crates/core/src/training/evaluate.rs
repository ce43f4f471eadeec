use serde::Serialize;

use super::{mae_loss_value, TrainError};
use crate::data::{make_windows, ForecastBatch, MultiModeDataset, Scaler, Split, SplitRanges, Window};
use crate::metrics::{mae, MetricTable};
use crate::model::SimMst;
use crate::numerics::Tensor;

/// Horizon steps reported in metric tables (1-indexed).
pub const DEFAULT_HORIZON_STEPS: [usize; 3] = [3, 6, 12];

/// Predictions and targets for `windows` of a scaled dataset, both
/// `[B, M, N, H, C]` and still in scaled units.
pub fn predict_windows(
    model: &SimMst,
    scaled: &MultiModeDataset,
    windows: &[Window],
    batch_size: usize,
) -> Result<(Tensor, Tensor), TrainError> {
    let cfg = model.config();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for chunk in windows.chunks(batch_size.max(1)) {
        let batch = ForecastBatch::collate(scaled, chunk, cfg.history_len, cfg.horizon);
        pred.extend_from_slice(model.predict(&batch)?.data());
        truth.extend_from_slice(batch.target.data());
    }
    let shape = vec![windows.len(), cfg.num_modes, cfg.num_nodes, cfg.horizon, cfg.channels];
    Ok((
        Tensor::new(shape.clone(), pred).map_err(|e| TrainError::Shape(e.to_string()))?,
        Tensor::new(shape, truth).map_err(|e| TrainError::Shape(e.to_string()))?,
    ))
}

/// Mean per-sample objective over `windows`, in scaled units.
pub fn split_loss(
    model: &SimMst,
    scaled: &MultiModeDataset,
    windows: &[Window],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Config("cannot score an empty split".into()));
    }
    let (pred, truth) = predict_windows(model, scaled, windows, batch_size)?;
    let per_sample = mae_loss_value(&pred, &truth)?;
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub split: Split,
    pub num_windows: usize,
    /// Mean per-sample objective in scaled units, comparable to the
    /// validation loss in the training history.
    pub loss: f64,
    /// Per-mode MAE over every horizon step, in original units.
    pub mode_mae: Vec<f64>,
    pub table: MetricTable,
    /// `[B, M, N, H, C]` in original units.
    #[serde(skip)]
    pub predictions: Tensor,
    #[serde(skip)]
    pub targets: Tensor,
}

/// Scores `model` on one split. The scaler is refit on the training range,
/// so it matches the one used during training.
pub fn evaluate(
    model: &SimMst,
    ds: &MultiModeDataset,
    ranges: &SplitRanges,
    split: Split,
    steps: &[usize],
    batch_size: usize,
) -> Result<EvalReport, TrainError> {
    let cfg = model.config();
    if let Some(&bad) = steps.iter().find(|&&s| s == 0 || s > cfg.horizon) {
        return Err(TrainError::Config(format!(
            "horizon step {bad} is outside 1..={}",
            cfg.horizon
        )));
    }
    let scaler = Scaler::fit(ds, ranges.train.clone());
    let scaled = scaler.apply(ds);
    let windows = make_windows(&scaled, ranges.get(split), cfg.history_len, cfg.horizon, 1);
    if windows.is_empty() {
        return Err(TrainError::Config(format!("{split:?} split holds no complete window")));
    }
    let (mut pred, mut truth) = predict_windows(model, &scaled, &windows, batch_size)?;
    let per_sample = mae_loss_value(&pred, &truth)?;
    let loss = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    scaler.invert(&mut pred, 1);
    scaler.invert(&mut truth, 1);
    let mut mode_mae = Vec::with_capacity(cfg.num_modes);
    for m in 0..cfg.num_modes {
        let p = crate::model::mode_slice(&pred, m);
        let t = crate::model::mode_slice(&truth, m);
        mode_mae.push(mae(p.data(), t.data())?);
    }
    let table = MetricTable::compute(&pred, &truth, &ds.mode_names, steps)?;
    Ok(EvalReport {
        split,
        num_windows: windows.len(),
        loss,
        mode_mae,
        table,
        predictions: pred,
        targets: truth,
    })
}
