//! Real-input discrete Fourier transforms over the last axis.
//!
//! The spectrum of a length-`n` real signal is kept as the non-redundant half
//! (`n / 2 + 1` bins) split into separate real and imaginary tensors.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{NumericsError, Tensor};

/// Number of non-redundant bins for a real signal of length `n`.
pub fn half_spectrum_len(n: usize) -> usize {
    n / 2 + 1
}

/// Forward real FFT along the last axis. Returns `(real, imaginary)` parts,
/// each shaped `[.., n / 2 + 1]`.
pub fn real_fft(x: &Tensor) -> Result<(Tensor, Tensor), NumericsError> {
    let n = last_axis(x, "real_fft")?;
    let bins = half_spectrum_len(n);
    let rows = x.numel() / n;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut re = Vec::with_capacity(rows * bins);
    let mut im = Vec::with_capacity(rows * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for row in x.data().chunks_exact(n) {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for c in &buf[..bins] {
            re.push(c.re);
            im.push(c.im);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = bins;
    Ok((Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?))
}

/// Inverse of [`real_fft`]: rebuilds a length-`n` real signal from its half
/// spectrum. Imaginary parts of the DC bin (and the Nyquist bin for even `n`)
/// are ignored, as they must vanish for a real signal.
pub fn inverse_real_fft(re: &Tensor, im: &Tensor, n: usize) -> Result<Tensor, NumericsError> {
    if re.shape() != im.shape() {
        return Err(NumericsError::ShapeMismatch {
            op: "inverse_real_fft",
            lhs: re.shape().to_vec(),
            rhs: im.shape().to_vec(),
        });
    }
    let bins = last_axis(re, "inverse_real_fft")?;
    if n == 0 || bins != half_spectrum_len(n) {
        return Err(NumericsError::InvalidShape {
            op: "inverse_real_fft",
            shape: re.shape().to_vec(),
            reason: "spectrum length must be n / 2 + 1",
        });
    }
    let rows = re.numel() / bins;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = Vec::with_capacity(rows * n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for (r, i) in re.data().chunks_exact(bins).zip(im.data().chunks_exact(bins)) {
        hermitian_fill(&mut buf, r, i);
        ifft.process(&mut buf);
        out.extend(buf.iter().map(|c| c.re * scale));
    }
    let mut shape = re.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}

fn hermitian_fill(buf: &mut [Complex<f64>], re: &[f64], im: &[f64]) {
    let n = buf.len();
    let bins = re.len();
    for k in 0..bins {
        let imag = if k == 0 || 2 * k == n { 0.0 } else { im[k] };
        buf[k] = Complex::new(re[k], imag);
        if k != 0 && 2 * k != n {
            buf[n - k] = Complex::new(re[k], -imag);
        }
    }
}

/// Adjoint of [`real_fft`]: maps upstream gradients on the real and imaginary
/// bins back to the time domain, `dx_t = sum_k gre_k cos(2 pi k t / n) - gim_k sin(2 pi k t / n)`.
pub(crate) fn real_fft_adjoint(grad_re: Option<&[f64]>, grad_im: Option<&[f64]>, n: usize, out: &mut [f64]) {
    let bins = half_spectrum_len(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (row, dx) in out.chunks_exact_mut(n).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for k in 0..bins {
            let r = grad_re.map_or(0.0, |g| g[row * bins + k]);
            let i = grad_im.map_or(0.0, |g| g[row * bins + k]);
            buf[k] = Complex::new(r, i);
        }
        ifft.process(&mut buf);
        for (d, c) in dx.iter_mut().zip(&buf) {
            *d += c.re;
        }
    }
}

/// Adjoint of [`inverse_real_fft`]: accumulates gradients for the real and
/// imaginary half-spectrum given the upstream time-domain gradient.
pub(crate) fn inverse_real_fft_adjoint(
    grad: &[f64],
    n: usize,
    mut grad_re: Option<&mut [f64]>,
    mut grad_im: Option<&mut [f64]>,
) {
    let bins = half_spectrum_len(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let inv_n = 1.0 / n as f64;
    for (row, g) in grad.chunks_exact(n).enumerate() {
        for (b, &v) in buf.iter_mut().zip(g) {
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            let edge = k == 0 || 2 * k == n;
            let weight = if edge { inv_n } else { 2.0 * inv_n };
            if let Some(gr) = grad_re.as_deref_mut() {
                gr[row * bins + k] += weight * buf[k].re;
            }
            if let Some(gi) = grad_im.as_deref_mut() {
                if !edge {
                    gi[row * bins + k] += weight * buf[k].im;
                }
            }
        }
    }
}

fn last_axis(x: &Tensor, op: &'static str) -> Result<usize, NumericsError> {
    match x.shape().last() {
        Some(&n) if n >= 1 => Ok(n),
        _ => Err(NumericsError::InvalidShape {
            op,
            shape: x.shape().to_vec(),
            reason: "needs at least one axis",
        }),
    }
}
