//! Per-mode building blocks: initial embedding, temporal mixing (TDL),
//! channel mixing (CCL) and the time-semantic readout.

use crate::numerics::{NumericsError, Tape, Tensor, Var, LAYER_NORM_EPS};

use super::config::pool_window;

/// `x W + b` over the last axis.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub weight: Var,
    pub bias: Var,
}

impl Affine {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NumericsError> {
        let y = tape.matmul(x, self.weight)?;
        tape.add(y, self.bias)
    }
}

/// Two affine maps with GeLU between.
#[derive(Clone, Copy, Debug)]
pub struct TwoLayer {
    pub hidden: Affine,
    pub output: Affine,
}

impl TwoLayer {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NumericsError> {
        let h = self.hidden.apply(tape, x)?;
        let h = tape.gelu(h);
        self.output.apply(tape, h)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: Var,
    pub beta: Var,
}

impl Norm {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NumericsError> {
        tape.layer_norm(x, self.gamma, self.beta, LAYER_NORM_EPS)
    }
}

/// Frequency-domain filter: complex weight and bias per bin.
#[derive(Clone, Copy, Debug)]
pub struct SpectralFilter {
    pub weight_re: Var,
    pub weight_im: Var,
    pub bias_re: Var,
    pub bias_im: Var,
}

impl SpectralFilter {
    /// `IFFT(FFT(x) * W + b)` along the last axis.
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NumericsError> {
        let n = *tape.shape(x).last().expect("rank >= 1");
        let (re, im) = tape.real_fft(x)?;
        let rr = tape.mul(re, self.weight_re)?;
        let ii = tape.mul(im, self.weight_im)?;
        let ri = tape.mul(re, self.weight_im)?;
        let ir = tape.mul(im, self.weight_re)?;
        let out_re = tape.sub(rr, ii)?;
        let out_re = tape.add(out_re, self.bias_re)?;
        let out_im = tape.add(ri, ir)?;
        let out_im = tape.add(out_im, self.bias_im)?;
        tape.inverse_real_fft(out_re, out_im, n)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TemporalMixer {
    Mlp(TwoLayer),
    Seasonal(SpectralFilter),
}

/// Enabled temporal branch of one layer for one mode.
#[derive(Clone, Copy, Debug)]
pub struct TdlBlock {
    pub mixer: TemporalMixer,
    pub norm: Norm,
}

/// Enabled channel branch of one layer for one mode.
#[derive(Clone, Copy, Debug)]
pub struct CclBlock {
    pub mlp: TwoLayer,
    pub norm: Norm,
}

/// `[input, output]` matrix averaging consecutive windows of the time axis.
pub fn pooling_matrix(input: usize, output: usize) -> Result<Tensor, NumericsError> {
    let window = pool_window(input, output).ok_or(NumericsError::InvalidShape {
        op: "pooling_matrix",
        shape: vec![input, output],
        reason: "output windows would be empty",
    })?;
    let mut m = Tensor::zeros([input, output]);
    for j in 0..output {
        let lo = j * window;
        let hi = ((j + 1) * window).min(input);
        for i in lo..hi {
            m.set(&[i, j], 1.0 / (hi - lo) as f64);
        }
    }
    Ok(m)
}

/// Per-timestamp affine embedding `[B, N, W, C] -> [B, N, W, D]`.
pub fn init_hidden(tape: &mut Tape, x: Var, init: &Affine) -> Result<Var, NumericsError> {
    init.apply(tape, x)
}

/// Temporal mixing `[B, N, T_in, D] -> [B, N, T_out, D]`:
/// `LN(f(H)) + pool(H)`, or just `pool(H)` when the branch is disabled.
pub fn tdl_forward(tape: &mut Tape, hidden: Var, block: Option<&TdlBlock>, t_out: usize) -> Result<Var, NumericsError> {
    let shape = tape.shape(hidden).to_vec();
    if shape.len() < 2 {
        return Err(NumericsError::InvalidShape {
            op: "tdl_forward",
            shape,
            reason: "expects [.., T, D]",
        });
    }
    let t_in = shape[shape.len() - 2];
    let pool = tape.constant(pooling_matrix(t_in, t_out)?);
    // Work with time as the last axis.
    let time_last = tape.transpose(hidden)?;
    let pooled = tape.matmul(time_last, pool)?;
    let residual = tape.transpose(pooled)?;
    let Some(block) = block else {
        return Ok(residual);
    };
    let mixed = match &block.mixer {
        TemporalMixer::Mlp(mlp) => mlp.apply(tape, time_last)?,
        TemporalMixer::Seasonal(filter) => {
            let filtered = filter.apply(tape, time_last)?;
            tape.matmul(filtered, pool)?
        }
    };
    let mixed = tape.transpose(mixed)?;
    let normed = block.norm.apply(tape, mixed)?;
    tape.add(normed, residual)
}

/// Channel mixing `LN(f(S)) + S`, or `S` when the branch is disabled.
pub fn ccl_forward(tape: &mut Tape, state: Var, block: Option<&CclBlock>) -> Result<Var, NumericsError> {
    let Some(block) = block else {
        return Ok(state);
    };
    let mixed = block.mlp.apply(tape, state)?;
    let normed = block.norm.apply(tape, mixed)?;
    tape.add(normed, state)
}

/// Time-of-day plus day-of-week embedding per sample, `[B, D]`.
pub fn time_semantics(
    tape: &mut Tape,
    time_of_day: Var,
    day_of_week: Var,
    tod_index: &[usize],
    dow_index: &[usize],
) -> Result<Var, NumericsError> {
    let tod = tape.gather_rows(time_of_day, tod_index)?;
    let dow = tape.gather_rows(day_of_week, dow_index)?;
    tape.add(tod, dow)
}

/// Readout for one mode: mean-pool each `[B, N, T_l, D]` state over time, sum
/// over layers, concatenate the `[B, D]` time semantics per node and map
/// `2D -> H * C`. Returns `[B, N, H, C]`.
pub fn readout(
    tape: &mut Tape,
    states: &[Var],
    semantics: Var,
    head: &TwoLayer,
    horizon: usize,
    channels: usize,
) -> Result<Var, NumericsError> {
    assert!(!states.is_empty(), "readout needs at least one hidden state");
    let mut summary: Option<Var> = None;
    for &state in states {
        let shape = tape.shape(state).to_vec();
        let (b, n, t, d) = (shape[0], shape[1], shape[2], shape[3]);
        let avg = tape.constant(Tensor::full([t, 1], 1.0 / t as f64));
        let time_last = tape.transpose(state)?;
        let pooled = tape.matmul(time_last, avg)?;
        let pooled = tape.reshape(pooled, &[b, n, d])?;
        summary = Some(match summary {
            None => pooled,
            Some(acc) => tape.add(acc, pooled)?,
        });
    }
    let summary = summary.expect("nonempty");
    let shape = tape.shape(summary).to_vec();
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    let sem_shape = tape.shape(semantics).to_vec();
    if sem_shape != [b, d] {
        return Err(NumericsError::ShapeMismatch {
            op: "readout",
            lhs: shape,
            rhs: sem_shape,
        });
    }
    let sem = tape.reshape(semantics, &[b, 1, d])?;
    let sem = tape.broadcast_to(sem, &[b, n, d])?;
    let z = tape.concat_last(summary, sem)?;
    let y = head.apply(tape, z)?;
    tape.reshape(y, &[b, n, horizon, channels])
}
