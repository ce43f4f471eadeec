//! Central finite-difference verification of tape gradients.

use super::{NumericsError, Tape, Tensor, Var};

/// Gradients whose magnitude falls below this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Relative discrepancy between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub name: String,
    pub max_relative_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub leaves: Vec<LeafReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.leaves.iter().map(|l| l.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.leaves.iter().all(|l| l.max_relative_error < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LeafReport> {
        self.leaves.iter().filter(|l| l.max_relative_error >= self.tolerance)
    }
}

/// Compares reverse-mode gradients of the scalar program `f` against central
/// differences with the given `step`, for every element of every leaf.
pub fn gradient_check<F>(
    f: F,
    leaves: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(leaves)
        .map(|(&v, (_, t))| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();

    let eval = |values: &[Tensor]| -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        v.item().ok_or(NumericsError::NonScalarRoot {
            shape: v.shape().to_vec(),
        })
    };

    let mut values: Vec<Tensor> = leaves.iter().map(|(_, t)| t.clone()).collect();
    let mut reports = Vec::with_capacity(leaves.len());
    for (li, (name, _)) in leaves.iter().enumerate() {
        let mut worst = LeafReport {
            name: name.clone(),
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..values[li].numel() {
            let original = values[li].data()[i];
            values[li].data_mut()[i] = original + step;
            let plus = eval(&values)?;
            values[li].data_mut()[i] = original - step;
            let minus = eval(&values)?;
            values[li].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[li].data()[i];
            let err = relative_error(a, numeric);
            if err > worst.max_relative_error || i == 0 {
                worst = LeafReport {
                    name: name.clone(),
                    max_relative_error: err,
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
        reports.push(worst);
    }
    Ok(GradCheckReport {
        leaves: reports,
        tolerance,
    })
}
