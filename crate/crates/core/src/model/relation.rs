//! Cross-mode relation learning, normalization, propagation and aggregation.

use crate::numerics::{NumericsError, Tape, Tensor, Var};

/// Raw relation from mode `j` onto mode `i`:
/// `relu(tanh(E_out_j E_in_i^T - E_in_j E_out_i^T))`, shaped `[N, N]`.
///
/// The first product is the gross impact of `j` on `i`, the second the
/// reverse impact; only a positive net impact survives.
pub fn learn_relation_matrix(
    tape: &mut Tape,
    in_i: Var,
    out_i: Var,
    in_j: Var,
    out_j: Var,
) -> Result<Var, NumericsError> {
    let in_i_t = tape.transpose(in_i)?;
    let out_i_t = tape.transpose(out_i)?;
    let gross = tape.matmul(out_j, in_i_t)?;
    let reverse = tape.matmul(in_j, out_i_t)?;
    let net = tape.sub(gross, reverse)?;
    let squashed = tape.tanh(net);
    Ok(tape.relu(squashed))
}

/// Keep-mask of the `k` largest entries in every row of a `[rows, cols]`
/// matrix. Ties go to the lower column index.
pub fn topk_mask(values: &Tensor, k: usize) -> Vec<bool> {
    let cols = *values.shape().last().expect("matrix");
    let mut keep = vec![false; values.numel()];
    let mut order: Vec<usize> = Vec::with_capacity(cols);
    for (row, chunk) in values.data().chunks_exact(cols).enumerate() {
        order.clear();
        order.extend(0..cols);
        // Stable sort: equal values keep ascending column order.
        order.sort_by(|&a, &b| chunk[b].total_cmp(&chunk[a]));
        for &c in order.iter().take(k) {
            keep[row * cols + c] = true;
        }
    }
    keep
}

/// Zeroes all but the `k` largest entries of each row.
pub fn sparsify_rows(tape: &mut Tape, relation: Var, k: usize) -> Result<Var, NumericsError> {
    let keep = topk_mask(tape.value(relation), k);
    tape.mask(relation, keep)
}

/// Adds self-loops and row-normalizes: `D^-1 (A + I)` with `D` the row sums
/// of `A + I`. Rows of a nonnegative input always have degree at least 1.
pub fn normalize_relation_matrix(tape: &mut Tape, relation: Var) -> Result<Var, NumericsError> {
    let shape = tape.shape(relation).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(NumericsError::InvalidShape {
            op: "normalize_relation_matrix",
            shape,
            reason: "expects a square matrix",
        });
    }
    let eye = tape.constant(Tensor::eye(shape[0]));
    let looped = tape.add(relation, eye)?;
    let degree = tape.sum_last(looped);
    tape.div(looped, degree)
}

/// `A T + A^T T` over the node axis of `features: [.., N, T, D]`.
pub fn cross_mode_propagate(tape: &mut Tape, relation: Var, features: Var) -> Result<Var, NumericsError> {
    let shape = tape.shape(features).to_vec();
    let n = tape.shape(relation)[0];
    if shape.len() < 3 || shape[shape.len() - 3] != n {
        return Err(NumericsError::ShapeMismatch {
            op: "cross_mode_propagate",
            lhs: tape.shape(relation).to_vec(),
            rhs: shape,
        });
    }
    let lead = &shape[..shape.len() - 2];
    let mut flat_shape = lead.to_vec();
    flat_shape.push(shape[shape.len() - 2] * shape[shape.len() - 1]);
    let flat = tape.reshape(features, &flat_shape)?;
    let forward = tape.matmul(relation, flat)?;
    let relation_t = tape.transpose(relation)?;
    let backward = tape.matmul(relation_t, flat)?;
    let both = tape.add(forward, backward)?;
    tape.reshape(both, &shape)
}

/// `sum_j (w_j + [j == target]) * impacts[j]`, with `weights[j]` single-element.
pub fn aggregate_mode_impacts(
    tape: &mut Tape,
    impacts: &[Var],
    weights: &[Var],
    target: usize,
) -> Result<Var, NumericsError> {
    assert_eq!(impacts.len(), weights.len(), "one weight per source mode");
    let mut total: Option<Var> = None;
    for (j, (&impact, &w)) in impacts.iter().zip(weights).enumerate() {
        let coeff = if j == target { tape.offset(w, 1.0) } else { w };
        let term = tape.mul(impact, coeff)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.expect("at least one mode"))
}
