use super::TrainError;
use crate::numerics::{Tape, Tensor, Var};

/// Absolute error summed over modes, nodes, horizon and channels, averaged
/// over the batch. `predictions` holds one `[B, N, H, C]` var per mode and
/// `target` is `[B, M, N, H, C]`.
pub fn mae_loss(tape: &mut Tape, predictions: &[Var], target: &Tensor) -> Result<Var, TrainError> {
    let ts = target.shape();
    if ts.len() != 5 || ts[1] != predictions.len() {
        return Err(TrainError::Shape(format!(
            "target {ts:?} does not match {} predicted modes",
            predictions.len()
        )));
    }
    let b = ts[0];
    let mut total: Option<Var> = None;
    for (m, &pred) in predictions.iter().enumerate() {
        if tape.shape(pred) != [ts[0], ts[2], ts[3], ts[4]] {
            return Err(TrainError::Shape(format!(
                "prediction for mode {m} has shape {:?}, target is {ts:?}",
                tape.shape(pred)
            )));
        }
        let truth = tape.constant(crate::model::mode_slice(target, m));
        let diff = tape.sub(pred, truth)?;
        let abs = tape.abs(diff);
        let s = tape.sum(abs);
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let total = total.ok_or_else(|| TrainError::Shape("no modes to score".into()))?;
    Ok(tape.scale(total, 1.0 / b as f64))
}

/// Per-sample loss values for `[B, M, N, H, C]` tensors.
pub fn mae_loss_value(pred: &Tensor, truth: &Tensor) -> Result<Vec<f64>, TrainError> {
    if pred.shape() != truth.shape() || pred.rank() != 5 {
        return Err(TrainError::Shape(format!(
            "prediction {:?} and truth {:?} must match as [B, M, N, H, C]",
            pred.shape(),
            truth.shape()
        )));
    }
    let b = pred.shape()[0];
    let per = pred.numel() / b;
    Ok(pred
        .data()
        .chunks_exact(per)
        .zip(truth.data().chunks_exact(per))
        .map(|(p, t)| p.iter().zip(t).map(|(x, y)| (x - y).abs()).sum())
        .collect())
}
