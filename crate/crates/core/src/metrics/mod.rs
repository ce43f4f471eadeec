//! Forecast accuracy metrics in original data units.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::numerics::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metrics need nonempty input")]
    Empty,
    #[error("prediction has {pred} values but truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("{len} values do not divide into series of {series}")]
    Ragged { len: usize, series: usize },
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((total / pred.len() as f64).sqrt())
}

/// Average Pearson correlation over `series` interleaved series.
///
/// Values are sample-major: entry `s * series + k` is sample `s` of series
/// `k`. Series whose truth is constant are skipped. A constant prediction
/// against a varying truth counts as correlation 0. Returns `None` when no
/// series qualifies.
pub fn corr(pred: &[f64], truth: &[f64], series: usize) -> Result<Option<f64>, MetricsError> {
    check(pred, truth)?;
    if series == 0 || !pred.len().is_multiple_of(series) {
        return Err(MetricsError::Ragged {
            len: pred.len(),
            series,
        });
    }
    let samples = pred.len() / series;
    let mut total = 0.0;
    let mut counted = 0usize;
    for k in 0..series {
        let at = |v: &[f64], s: usize| v[s * series + k];
        let mp = (0..samples).map(|s| at(pred, s)).sum::<f64>() / samples as f64;
        let mt = (0..samples).map(|s| at(truth, s)).sum::<f64>() / samples as f64;
        let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
        for s in 0..samples {
            let dp = at(pred, s) - mp;
            let dt = at(truth, s) - mt;
            cov += dp * dt;
            vp += dp * dp;
            vt += dt * dt;
        }
        if vt == 0.0 {
            continue;
        }
        counted += 1;
        if vp > 0.0 {
            total += (cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0);
        }
    }
    Ok((counted > 0).then(|| total / counted as f64))
}

/// Values of one mode at one 1-indexed horizon step from a `[B, M, N, H, C]`
/// tensor, sample-major over `N * C` series.
pub fn horizon_slice(values: &Tensor, mode: usize, step: usize) -> Vec<f64> {
    let s = values.shape();
    assert_eq!(s.len(), 5, "expected [B, M, N, H, C]");
    assert!(step >= 1 && step <= s[3], "horizon step {step} outside 1..={}", s[3]);
    let (b, m, n, h, c) = (s[0], s[1], s[2], s[3], s[4]);
    let mut out = Vec::with_capacity(b * n * c);
    for bi in 0..b {
        for node in 0..n {
            let base = (((bi * m + mode) * n + node) * h + step - 1) * c;
            out.extend_from_slice(&values.data()[base..base + c]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub mode: String,
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
    pub corr: Option<f64>,
}

/// Per-(mode, horizon step) metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    /// Scores `[B, M, N, H, C]` predictions at each 1-indexed horizon step.
    pub fn compute(
        pred: &Tensor,
        truth: &Tensor,
        mode_names: &[String],
        steps: &[usize],
    ) -> Result<Self, MetricsError> {
        if pred.shape() != truth.shape() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.numel(),
                truth: truth.numel(),
            });
        }
        let s = pred.shape();
        let series = s[2] * s[4];
        let mut rows = Vec::with_capacity(mode_names.len() * steps.len());
        for (m, name) in mode_names.iter().enumerate() {
            for &step in steps {
                let p = horizon_slice(pred, m, step);
                let t = horizon_slice(truth, m, step);
                rows.push(MetricRow {
                    mode: name.clone(),
                    horizon: step,
                    mae: mae(&p, &t)?,
                    rmse: rmse(&p, &t)?,
                    corr: corr(&p, &t, series)?,
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn get(&self, mode: &str, horizon: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.mode == mode && r.horizon == horizon)
    }

    /// Mean MAE of one mode over the reported horizons.
    pub fn mean_mae(&self, mode: &str) -> Option<f64> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.mode == mode).collect();
        (!rows.is_empty()).then(|| rows.iter().map(|r| r.mae).sum::<f64>() / rows.len() as f64)
    }

    /// CSV with header `mode,horizon,mae,rmse,corr`; an undefined CORR is an
    /// empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,horizon,mae,rmse,corr\n");
        for r in &self.rows {
            let corr = r.corr.map(|c| c.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", r.mode, r.horizon, r.mae, r.rmse, corr).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}
