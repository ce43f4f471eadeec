//! Parameter-count sweeps and growth-exponent fits.

use serde::Serialize;

use super::{ModelError, SimMst, SimMstConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub num_nodes: usize,
    pub history_len: usize,
    /// All learnable scalars.
    pub total: usize,
    /// Scalars of the temporal mixers, the only tensors whose size depends on
    /// the history length.
    pub temporal: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub node_sweep: Vec<ScalingPoint>,
    pub window_sweep: Vec<ScalingPoint>,
    /// Log-log slope of `total` against `N`.
    pub node_exponent: f64,
    /// Log-log slope of `temporal` against `W`.
    pub window_exponent: f64,
    /// Log-log slope of `total` against `W`, diluted by the constant terms.
    pub window_exponent_total: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

fn point(base: &SimMstConfig, num_nodes: usize, history_len: usize) -> Result<ScalingPoint, ModelError> {
    let cfg = SimMstConfig {
        num_nodes,
        history_len,
        topk: base.topk.min(num_nodes),
        temporal_lengths: None,
        ..base.clone()
    };
    let model = SimMst::new(cfg)?;
    let temporal = model
        .params()
        .iter()
        .filter(|(name, _)| name.contains(".tdl.") && !name.contains(".tdl.norm."))
        .map(|(_, t)| t.numel())
        .sum();
    Ok(ScalingPoint {
        num_nodes,
        history_len,
        total: model.count_parameters(),
        temporal,
    })
}

/// Counts parameters across sweeps of `N` (at the base `W`) and `W` (at the
/// base `N`) and fits growth exponents.
pub fn scaling_report(base: &SimMstConfig, nodes: &[usize], windows: &[usize]) -> Result<ScalingReport, ModelError> {
    let node_sweep = nodes
        .iter()
        .map(|&n| point(base, n, base.history_len))
        .collect::<Result<Vec<_>, _>>()?;
    let window_sweep = windows
        .iter()
        .map(|&w| point(base, base.num_nodes, w))
        .collect::<Result<Vec<_>, _>>()?;
    let xs = |pts: &[ScalingPoint], f: fn(&ScalingPoint) -> usize| pts.iter().map(|p| f(p) as f64).collect::<Vec<_>>();
    let node_exponent = fit_power_law(&xs(&node_sweep, |p| p.num_nodes), &xs(&node_sweep, |p| p.total));
    let wx = xs(&window_sweep, |p| p.history_len);
    let window_exponent = if base.enable_tdl {
        fit_power_law(&wx, &xs(&window_sweep, |p| p.temporal))
    } else {
        0.0
    };
    let window_exponent_total = fit_power_law(&wx, &xs(&window_sweep, |p| p.total));
    Ok(ScalingReport {
        node_sweep,
        window_sweep,
        node_exponent,
        window_exponent,
        window_exponent_total,
    })
}
