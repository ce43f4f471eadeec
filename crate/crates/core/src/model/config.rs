use serde::{Deserialize, Serialize};

use super::ModelError;

/// Temporal mixing backbone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TdlKind {
    /// Two affine maps along time with GeLU between.
    #[default]
    Mlp,
    /// Learnable complex filter in the frequency domain.
    Seasonal,
}

impl std::str::FromStr for TdlKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(TdlKind::Mlp),
            "seasonal" => Ok(TdlKind::Seasonal),
            other => Err(format!("unknown tdl kind {other:?} (expected mlp or seasonal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimMstConfig {
    pub num_modes: usize,
    pub num_nodes: usize,
    pub history_len: usize,
    pub horizon: usize,
    pub channels: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub topk: usize,
    pub tdl_kind: TdlKind,
    pub enable_tdl: bool,
    pub enable_csrl: bool,
    pub enable_ccl: bool,
    /// One in/out projection pair for all modes instead of one per mode.
    pub share_projections: bool,
    /// `T_0..T_L`; defaults to repeated ceil-halving from `history_len`.
    pub temporal_lengths: Option<Vec<usize>>,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for SimMstConfig {
    fn default() -> Self {
        Self {
            num_modes: 2,
            num_nodes: 20,
            history_len: 12,
            horizon: 12,
            channels: 1,
            hidden_dim: 32,
            embed_dim: 40,
            num_layers: 3,
            topk: 20,
            tdl_kind: TdlKind::Mlp,
            enable_tdl: true,
            enable_csrl: true,
            enable_ccl: true,
            share_projections: true,
            temporal_lengths: None,
            init_seed: 0,
        }
    }
}

impl SimMstConfig {
    /// Smallest configuration used for exhaustive gradient checks.
    pub fn tiny() -> Self {
        Self {
            num_modes: 2,
            num_nodes: 3,
            history_len: 4,
            horizon: 2,
            channels: 1,
            hidden_dim: 4,
            embed_dim: 4,
            num_layers: 1,
            topk: 2,
            ..Self::default()
        }
    }

    /// `T_0..T_L`.
    pub fn lengths(&self) -> Vec<usize> {
        match &self.temporal_lengths {
            Some(l) => l.clone(),
            None => {
                let mut out = vec![self.history_len];
                for _ in 0..self.num_layers {
                    let prev = *out.last().unwrap();
                    out.push(prev.div_ceil(2));
                }
                out
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        let dims = [
            ("num_modes", self.num_modes),
            ("num_nodes", self.num_nodes),
            ("history_len", self.history_len),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("topk", self.topk),
        ];
        for (name, v) in dims {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.topk > self.num_nodes {
            return bad(format!("topk {} exceeds num_nodes {}", self.topk, self.num_nodes));
        }
        let lengths = self.lengths();
        if lengths.len() != self.num_layers + 1 || lengths[0] != self.history_len {
            return bad(format!(
                "temporal_lengths {lengths:?} must have num_layers + 1 entries starting at history_len"
            ));
        }
        for pair in lengths.windows(2) {
            if pool_window(pair[0], pair[1]).is_none() {
                return bad(format!("cannot pool temporal length {} down to {}", pair[0], pair[1]));
            }
        }
        Ok(())
    }
}

/// Window size for mean-pooling `input` steps down to `output` steps, if every
/// output window is nonempty.
pub fn pool_window(input: usize, output: usize) -> Option<usize> {
    if output == 0 || output > input {
        return None;
    }
    let window = input.div_ceil(output);
    ((output - 1) * window < input).then_some(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_schedule() {
        let cfg = SimMstConfig::default();
        assert_eq!(cfg.lengths(), vec![12, 6, 3, 2]);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let cfg = SimMstConfig {
            topk: 21,
            ..SimMstConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SimMstConfig {
            temporal_lengths: Some(vec![12, 2, 1, 1]),
            ..SimMstConfig::default()
        };
        // 12 -> 2 is fine (window 6); 5 -> 4 would not be.
        cfg.validate().unwrap();
        assert_eq!(pool_window(5, 4), None);
        assert_eq!(pool_window(3, 2), Some(2));
        let cfg = SimMstConfig {
            num_layers: 0,
            ..SimMstConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
