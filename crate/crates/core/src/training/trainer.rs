use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, clip_gradients, mae_loss, split_loss, AdamState, TrainConfig, TrainError};
use crate::data::{make_windows, ForecastBatch, MultiModeDataset, Scaler, SplitRanges};
use crate::model::{save_checkpoint, SimMst};
use crate::numerics::Tape;

/// One line of the history log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: SimMst,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Training-split loss of the untrained model.
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// File names written into the output directory.
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CHECKPOINT_FILE: &str = "best.ckpt";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Trains on `ranges.train` with seeded mini-batch shuffling, validating on
/// `ranges.val` after every epoch. Stops once the number of epochs without
/// improvement exceeds `patience`.
///
/// With `out_dir`, the history log is written line by line and the best
/// checkpoint is rewritten on every improvement, so both survive an abort.
pub fn train(
    model: SimMst,
    ds: &MultiModeDataset,
    ranges: &SplitRanges,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mcfg = model.config().clone();
    if ds.num_modes() != mcfg.num_modes || ds.num_nodes() != mcfg.num_nodes || ds.num_channels() != mcfg.channels {
        return Err(TrainError::Shape(format!(
            "dataset is [{}, {}, _, {}] but the model expects [{}, {}, _, {}]",
            ds.num_modes(),
            ds.num_nodes(),
            ds.num_channels(),
            mcfg.num_modes,
            mcfg.num_nodes,
            mcfg.channels
        )));
    }
    let scaled = Scaler::fit(ds, ranges.train.clone()).apply(ds);
    let mut train_windows = make_windows(&scaled, ranges.train.clone(), mcfg.history_len, mcfg.horizon, 1);
    let val_windows = make_windows(&scaled, ranges.val.clone(), mcfg.history_len, mcfg.horizon, 1);
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(TrainError::Config(format!(
            "train and validation splits need at least {} steps each",
            mcfg.history_len + mcfg.horizon
        )));
    }

    let mut history_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(HISTORY_FILE);
            Some((File::create(&path).map_err(io_err(&path))?, path))
        }
        None => None,
    };

    let initial_train_loss = split_loss(&model, &scaled, &train_windows, cfg.batch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let mut adam = AdamState::new(model.params());
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_improvement = 0usize;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        train_windows.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_windows.chunks(cfg.batch_size) {
            let batch = ForecastBatch::collate(&scaled, chunk, mcfg.history_len, mcfg.horizon);
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let pass = model.forward(&mut tape, &bound, &batch)?;
            let loss = mae_loss(&mut tape, &pass.predictions, &batch.target)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            loss_sum += value * chunk.len() as f64;
            tape.backward(loss)?;
            let mut grads = bound.gradients(&tape, model.params());
            if let Some(max_norm) = cfg.clip_norm {
                clip_gradients(&mut grads, max_norm);
            }
            adam_step(model.params_mut(), &grads, &mut adam, cfg)?;
        }
        let train_loss = loss_sum / train_windows.len() as f64;
        let val_loss = split_loss(&model, &scaled, &val_windows, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
            since_improvement = 0;
            if let Some(dir) = out_dir {
                save_checkpoint(&best, &dir.join(CHECKPOINT_FILE))?;
            }
        } else {
            since_improvement += 1;
        }
        if let Some((file, path)) = history_file.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(file, "{line}").map_err(io_err(path))?;
        }
        observer(&record);
        history.push(record);
        if since_improvement > cfg.patience {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss: best_val,
        initial_train_loss,
        history,
        stopped_early,
    })
}
