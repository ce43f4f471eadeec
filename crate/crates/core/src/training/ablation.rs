use std::fmt::Write as _;

use serde::Serialize;

use super::{evaluate, train, EpochRecord, TrainConfig, TrainError, DEFAULT_HORIZON_STEPS};
use crate::data::{MultiModeDataset, Split, SplitRanges};
use crate::model::{SimMst, SimMstConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoTdl,
    NoCsrl,
    NoCcl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoTdl, Variant::NoCsrl, Variant::NoCcl];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTdl => "w/o TDL",
            Variant::NoCsrl => "w/o CSRL",
            Variant::NoCcl => "w/o CCL",
        }
    }

    pub fn apply(self, cfg: &SimMstConfig) -> SimMstConfig {
        let mut cfg = cfg.clone();
        match self {
            Variant::Full => {}
            Variant::NoTdl => cfg.enable_tdl = false,
            Variant::NoCsrl => cfg.enable_csrl = false,
            Variant::NoCcl => cfg.enable_ccl = false,
        }
        cfg
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    /// Test MAE per mode over all horizon steps, original units.
    pub mode_mae: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl AblationRow {
    pub fn mean_mae(&self) -> f64 {
        self.mode_mae.iter().sum::<f64>() / self.mode_mae.len() as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationTable {
    pub mode_names: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn rows_for(&self, variant: Variant) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Seed-averaged test MAE of one mode, or over all modes with `None`.
    pub fn mean_mae(&self, variant: Variant, mode: Option<usize>) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows_for(variant)
            .map(|r| mode.map_or_else(|| r.mean_mae(), |m| r.mode_mae[m]))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// One line per variant: seed-averaged MAE per mode and overall.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant");
        for m in &self.mode_names {
            write!(out, ",mae_{m}").unwrap();
        }
        out.push_str(",mae_mean,seeds\n");
        for v in Variant::ALL {
            let n = self.rows_for(v).count();
            if n == 0 {
                continue;
            }
            out.push_str(v.label());
            for m in 0..self.mode_names.len() {
                write!(out, ",{}", self.mean_mae(v, Some(m)).unwrap()).unwrap();
            }
            writeln!(out, ",{},{n}", self.mean_mae(v, None).unwrap()).unwrap();
        }
        out
    }

    /// Every individual run.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("variant,seed");
        for m in &self.mode_names {
            write!(out, ",mae_{m}").unwrap();
        }
        out.push_str(",best_epoch,best_val_loss\n");
        for r in &self.rows {
            write!(out, "{},{}", r.variant.label(), r.seed).unwrap();
            for v in &r.mode_mae {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},{}", r.best_epoch, r.best_val_loss).unwrap();
        }
        out
    }
}

/// Trains each variant once per seed and scores it on the test split. The
/// seed drives both parameter initialization and batch shuffling, so the
/// variants of one seed see identical data order.
pub fn run_ablation(
    ds: &MultiModeDataset,
    ranges: &SplitRanges,
    model_cfg: &SimMstConfig,
    train_cfg: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    observer: &mut dyn FnMut(Variant, u64, &EpochRecord),
) -> Result<AblationTable, TrainError> {
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    for &seed in seeds {
        for &variant in variants {
            let cfg = SimMstConfig {
                init_seed: seed,
                ..variant.apply(model_cfg)
            };
            let tcfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let outcome = train(SimMst::new(cfg)?, ds, ranges, &tcfg, None, &mut |r| {
                observer(variant, seed, r)
            })?;
            let steps: Vec<usize> = DEFAULT_HORIZON_STEPS
                .iter()
                .copied()
                .filter(|&s| s <= model_cfg.horizon)
                .collect();
            let report = evaluate(&outcome.best, ds, ranges, Split::Test, &steps, tcfg.batch_size)?;
            rows.push(AblationRow {
                variant,
                seed,
                mode_mae: report.mode_mae,
                best_epoch: outcome.best_epoch,
                best_val_loss: outcome.best_val_loss,
            });
        }
    }
    Ok(AblationTable {
        mode_names: ds.mode_names.clone(),
        rows,
    })
}
