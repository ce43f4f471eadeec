use std::ops::Range;

use super::{DataError, MultiModeDataset};
use crate::numerics::Tensor;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.15, 0.15];

/// Contiguous, ordered train/validation/test step ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl SplitRanges {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

/// Splits `[0, num_steps)` chronologically. Boundaries sit at
/// `floor(f0 * T)` and `floor((f0 + f1) * T)`; every part must hold at
/// least `min_len` steps.
pub fn chronological_split(num_steps: usize, fractions: [f64; 3], min_len: usize) -> Result<SplitRanges, DataError> {
    if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    // The tolerance keeps e.g. 0.85 * 100 from flooring to 84.
    let boundary = |f: f64| ((f * num_steps as f64) + 1e-9).floor() as usize;
    let b1 = boundary(fractions[0]).min(num_steps);
    let b2 = boundary(fractions[0] + fractions[1]).clamp(b1, num_steps);
    let ranges = SplitRanges {
        train: 0..b1,
        val: b1..b2,
        test: b2..num_steps,
    };
    for (name, r) in [("train", &ranges.train), ("val", &ranges.val), ("test", &ranges.test)] {
        if r.len() < min_len {
            return Err(DataError::Config(format!(
                "{name} split {r:?} has {} steps; at least {min_len} (history + horizon) are needed",
                r.len()
            )));
        }
    }
    Ok(ranges)
}

/// One forecasting sample: history `[start, start + W)`, target `[start + W, start + W + H)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub tod_index: usize,
    pub dow_index: usize,
}

impl Window {
    /// Index of the last observed step.
    pub fn anchor(&self, history: usize) -> usize {
        self.start + history - 1
    }
}

/// All windows lying entirely inside `range`, with time features taken at
/// the last history step.
pub fn make_windows(
    ds: &MultiModeDataset,
    range: Range<usize>,
    history: usize,
    horizon: usize,
    stride: usize,
) -> Vec<Window> {
    assert!(stride >= 1, "stride must be positive");
    let span = history + horizon;
    if range.len() < span || range.end > ds.num_steps() {
        return Vec::new();
    }
    (range.start..=range.end - span)
        .step_by(stride)
        .map(|start| {
            let (tod_index, dow_index) = ds.time_features(start + history - 1);
            Window {
                start,
                tod_index,
                dow_index,
            }
        })
        .collect()
}

/// A collated set of windows.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBatch {
    /// `[B, M, N, W, C]`
    pub history: Tensor,
    /// `[B, M, N, H, C]`
    pub target: Tensor,
    pub tod_index: Vec<usize>,
    pub dow_index: Vec<usize>,
}

impl ForecastBatch {
    pub fn collate(ds: &MultiModeDataset, windows: &[Window], history: usize, horizon: usize) -> Self {
        assert!(!windows.is_empty(), "cannot collate an empty batch");
        let (m, n, c) = (ds.num_modes(), ds.num_nodes(), ds.num_channels());
        let b = windows.len();
        let mut hist = Vec::with_capacity(b * m * n * history * c);
        let mut targ = Vec::with_capacity(b * m * n * horizon * c);
        for w in windows {
            for mode in 0..m {
                for node in 0..n {
                    let series = ds.series(mode, node);
                    hist.extend_from_slice(&series[w.start * c..(w.start + history) * c]);
                    let t0 = w.start + history;
                    targ.extend_from_slice(&series[t0 * c..(t0 + horizon) * c]);
                }
            }
        }
        Self {
            history: Tensor::new([b, m, n, history, c], hist).expect("history shape"),
            target: Tensor::new([b, m, n, horizon, c], targ).expect("target shape"),
            tod_index: windows.iter().map(|w| w.tod_index).collect(),
            dow_index: windows.iter().map(|w| w.dow_index).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.history.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dataset(steps: usize) -> MultiModeDataset {
        let start = NaiveDate::from_ymd_opt(2023, 3, 6)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        MultiModeDataset::new(
            Tensor::from_fn([2, 2, steps, 1], |i| i as f64),
            start,
            30,
            vec!["a".into(), "b".into()],
            vec!["v".into()],
        )
        .unwrap()
    }

    #[test]
    fn split_of_100_steps() {
        let s = chronological_split(100, DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..70, 70..85, 85..100));
    }

    #[test]
    fn split_union_covers_everything() {
        for t in [24usize, 97, 100, 401, 1000] {
            let s = chronological_split(t, DEFAULT_FRACTIONS, 1).unwrap();
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.val.start);
            assert_eq!(s.val.end, s.test.start);
            assert_eq!(s.test.end, t);
        }
    }

    #[test]
    fn short_split_is_rejected() {
        // T=160: val and test have 24 steps, exactly W + H.
        assert!(chronological_split(160, DEFAULT_FRACTIONS, 24).is_ok());
        assert!(matches!(
            chronological_split(150, DEFAULT_FRACTIONS, 24),
            Err(DataError::Config(_))
        ));
        assert!(chronological_split(100, [0.5, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn window_counts() {
        let ds = dataset(500);
        assert_eq!(make_windows(&ds, 0..400, 12, 12, 1).len(), 377);
        assert_eq!(make_windows(&ds, 100..124, 12, 12, 1).len(), 1);
        assert!(make_windows(&ds, 100..123, 12, 12, 1).is_empty());
        assert_eq!(make_windows(&ds, 0..400, 12, 12, 2).len(), 189);
    }

    #[test]
    fn time_of_day_uses_last_history_step() {
        let ds = dataset(100);
        // History [0, 2) ends at step 1 = 00:30.
        let w = make_windows(&ds, 0..10, 2, 1, 1);
        assert_eq!(w[0].tod_index, 1);
        assert_eq!(w[0].dow_index, 0);
    }

    #[test]
    fn windows_never_cross_split_boundaries() {
        let ds = dataset(120);
        let splits = chronological_split(120, DEFAULT_FRACTIONS, 7).unwrap();
        for split in [Split::Train, Split::Val, Split::Test] {
            let r = splits.get(split);
            let windows = make_windows(&ds, r.clone(), 4, 3, 1);
            // Exhaustive: every anchor inside the range that fits is present.
            let expected: Vec<usize> = (0..120).filter(|&s| s >= r.start && s + 7 <= r.end).collect();
            assert_eq!(windows.iter().map(|w| w.start).collect::<Vec<_>>(), expected);
        }
    }

    #[test]
    fn calendar_matches_independent_arithmetic() {
        let ds = dataset(2000);
        for w in make_windows(&ds, 0..2000, 12, 12, 1) {
            let last = w.start + 11;
            // Start is Monday 00:00 with 30-minute steps.
            assert_eq!(w.tod_index, last % 48);
            assert_eq!(w.dow_index, (last / 48) % 7);
        }
    }

    #[test]
    fn collate_layout() {
        let ds = dataset(30);
        let windows = make_windows(&ds, 0..30, 3, 2, 5);
        let batch = ForecastBatch::collate(&ds, &windows[1..3], 3, 2);
        assert_eq!(batch.history.shape(), &[2, 2, 2, 3, 1]);
        assert_eq!(batch.target.shape(), &[2, 2, 2, 2, 1]);
        // Second sample, mode 1, node 0, first history step = step 10.
        assert_eq!(batch.history.get(&[1, 1, 0, 0, 0]), ds.value(1, 0, 10, 0));
        assert_eq!(batch.target.get(&[0, 0, 1, 1, 0]), ds.value(0, 1, 9, 0));
    }
}
