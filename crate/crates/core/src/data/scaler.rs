use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::MultiModeDataset;
use crate::numerics::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per (mode, channel) z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    num_channels: usize,
    /// Indexed `mode * C + channel`.
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    /// Fits on the steps in `train` only (population standard deviation).
    pub fn fit(ds: &MultiModeDataset, train: Range<usize>) -> Self {
        let (m, n, c) = (ds.num_modes(), ds.num_nodes(), ds.num_channels());
        let count = (n * train.len()) as f64;
        let mut mean = vec![0.0; m * c];
        let mut std = vec![0.0; m * c];
        for mode in 0..m {
            for ch in 0..c {
                let values: Vec<f64> = (0..n)
                    .flat_map(|node| train.clone().map(move |t| ds.value(mode, node, t, ch)))
                    .collect();
                let mu = values.iter().sum::<f64>() / count;
                let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
                mean[mode * c + ch] = mu;
                std[mode * c + ch] = var.sqrt().max(STD_FLOOR);
            }
        }
        Self {
            num_channels: c,
            mean,
            std,
        }
    }

    pub fn mean(&self, mode: usize, channel: usize) -> f64 {
        self.mean[mode * self.num_channels + channel]
    }

    pub fn std(&self, mode: usize, channel: usize) -> f64 {
        self.std[mode * self.num_channels + channel]
    }

    pub fn apply_value(&self, mode: usize, channel: usize, v: f64) -> f64 {
        (v - self.mean(mode, channel)) / self.std(mode, channel)
    }

    pub fn invert_value(&self, mode: usize, channel: usize, z: f64) -> f64 {
        z * self.std(mode, channel) + self.mean(mode, channel)
    }

    /// Returns a scaled copy of the dataset.
    pub fn apply(&self, ds: &MultiModeDataset) -> MultiModeDataset {
        let mut out = ds.clone();
        self.map_mode_channel(out.values_mut(), 0, |s, m, c, v| s.apply_value(m, c, v));
        out
    }

    /// Restores original units in a tensor whose axis `mode_axis` indexes
    /// modes and whose last axis indexes channels, e.g. `[B, M, N, H, C]`.
    pub fn invert(&self, values: &mut Tensor, mode_axis: usize) {
        self.map_mode_channel(values, mode_axis, |s, m, c, v| s.invert_value(m, c, v));
    }

    pub fn apply_tensor(&self, values: &mut Tensor, mode_axis: usize) {
        self.map_mode_channel(values, mode_axis, |s, m, c, v| s.apply_value(m, c, v));
    }

    fn map_mode_channel(&self, values: &mut Tensor, mode_axis: usize, f: impl Fn(&Self, usize, usize, f64) -> f64) {
        let shape = values.shape().to_vec();
        let c = *shape.last().expect("channel axis");
        assert_eq!(c, self.num_channels, "channel count mismatch");
        let modes = shape[mode_axis];
        let inner: usize = shape[mode_axis + 1..].iter().product();
        for (i, v) in values.data_mut().iter_mut().enumerate() {
            let mode = (i / inner) % modes;
            let ch = i % c;
            *v = f(self, mode, ch, *v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dataset(values: Vec<f64>, shape: [usize; 4]) -> MultiModeDataset {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        MultiModeDataset::new(
            Tensor::new(shape, values).unwrap(),
            start,
            30,
            (0..shape[0]).map(|m| format!("m{m}")).collect(),
            (0..shape[3]).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_statistics() {
        let ds = dataset(vec![0.0, 2.0], [1, 1, 2, 1]);
        let s = Scaler::fit(&ds, 0..2);
        assert_eq!((s.mean(0, 0), s.std(0, 0)), (1.0, 1.0));
        assert_eq!(s.apply(&ds).values().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_scales_to_zero() {
        let ds = dataset(vec![4.0; 6], [1, 2, 3, 1]);
        let s = Scaler::fit(&ds, 0..3);
        assert_eq!(s.std(0, 0), STD_FLOOR);
        assert!(s.apply(&ds).values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn statistics_ignore_steps_outside_train() {
        let mut v: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ds_a = dataset(v.clone(), [1, 1, 20, 1]);
        v[15] = 1e6;
        let ds_b = dataset(v, [1, 1, 20, 1]);
        assert_eq!(Scaler::fit(&ds_a, 0..10), Scaler::fit(&ds_b, 0..10));
    }

    #[test]
    fn invert_apply_is_identity() {
        let values: Vec<f64> = (0..2 * 3 * 7 * 2).map(|i| ((i * 37) % 11) as f64 * 1.3 - 2.0).collect();
        let ds = dataset(values, [2, 3, 7, 2]);
        let s = Scaler::fit(&ds, 0..5);
        let mut scaled = s.apply(&ds).values().clone();
        s.invert(&mut scaled, 0);
        assert!(scaled.max_abs_diff(ds.values()) < 1e-9);
        // Distinct statistics per (mode, channel).
        assert_ne!(s.mean(0, 0), s.mean(1, 1));
    }
}
