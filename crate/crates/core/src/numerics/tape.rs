//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and the inputs needed for
//! the backward pass. Nodes only ever reference earlier nodes, so a single
//! reverse sweep visits them in a valid order.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::fft;
use super::tensor::{broadcast_shapes, Broadcast};
use super::{NumericsError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Tanh,
    Gelu,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    TransposeLast2(Var),
    Reshape(Var),
    BroadcastTo(Var),
    SumAll(Var),
    SumLast(Var),
    Mask(Var, Vec<bool>),
    ConcatLast(Var, Var),
    GatherRows(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    RealFft {
        x: Var,
        imag: bool,
    },
    InverseRealFft {
        re: Var,
        im: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Append-only record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GeLU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable input; receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient populated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |v| v.max(0.0),
            Unary::Tanh => f64::tanh,
            Unary::Gelu => gelu,
            Unary::Abs => f64::abs,
        };
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(value, Op::Unary(kind, x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(Unary::Gelu, x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    /// Elementwise binary operation with numpy-style broadcasting.
    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shapes(sa, sb).ok_or_else(|| NumericsError::ShapeMismatch {
            op: binary_name(kind),
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })?;
        let ba = Broadcast::new(&out_shape, sa);
        let bb = Broadcast::new(&out_shape, sb);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let n: usize = out_shape.iter().product();
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
            Binary::Div => |x, y| x / y,
        };
        let data = match (&ba, &bb) {
            (Broadcast::Same, Broadcast::Same) => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            (Broadcast::Same, Broadcast::Cycle(len)) => da
                .chunks_exact(*len)
                .flat_map(|row| row.iter().zip(db).map(|(&x, &y)| f(x, y)))
                .collect(),
            (Broadcast::Cycle(len), Broadcast::Same) => db
                .chunks_exact(*len)
                .flat_map(|row| da.iter().zip(row).map(|(&x, &y)| f(x, y)))
                .collect(),
            _ => ba.indices(n).zip(bb.indices(n)).map(|(i, j)| f(da[i], db[j])).collect(),
        };
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, x: Var, amount: f64) -> Var {
        let value = self.value(x).map(|v| v + amount);
        let rg = self.rg(x);
        self.push(value, Op::Offset(x), rg)
    }

    /// Batched matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let plan = MatMulPlan::new(&sa, &sb)?;
        let (batch, p) = plan.folded();
        let (q, r) = (plan.q, plan.r);
        let mut out = vec![0.0; plan.batch * plan.p * r];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for bi in 0..batch {
            let ao = plan.a_map.at(bi) * p * q;
            let bo = plan.b_map.at(bi) * q * r;
            let co = bi * p * r;
            gemm_acc(
                &da[ao..ao + p * q],
                &db[bo..bo + q * r],
                &mut out[co..co + p * r],
                p,
                q,
                r,
            );
        }
        let value = Tensor::new(plan.out_shape, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(NumericsError::InvalidShape {
                op: "transpose",
                shape,
                reason: "needs rank >= 2",
            });
        }
        let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let data = transpose_blocks(self.value(x).data(), rows, cols);
        let mut out_shape = shape;
        let k = out_shape.len();
        out_shape.swap(k - 2, k - 1);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::TransposeLast2(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let src = self.shape(x);
        if broadcast_shapes(src, shape).as_deref() != Some(shape) {
            return Err(NumericsError::ShapeMismatch {
                op: "broadcast_to",
                lhs: src.to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let map = Broadcast::new(shape, src);
        let d = self.value(x).data();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| d[map.at(i)]).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape.to_vec(), data)?, Op::BroadcastTo(x), rg))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Sums over the last axis, keeping it with length 1.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap_or(&1);
        let data = self.value(x).data().chunks_exact(n).map(|c| c.iter().sum()).collect();
        let mut out_shape = shape;
        if let Some(last) = out_shape.last_mut() {
            *last = 1;
        }
        let rg = self.rg(x);
        self.push(Tensor::new(out_shape, data).expect("shape"), Op::SumLast(x), rg)
    }

    /// Zeroes the entries where `keep` is false; gradients pass only through kept entries.
    pub fn mask(&mut self, x: Var, keep: Vec<bool>) -> Result<Var, NumericsError> {
        let value = self.value(x);
        if keep.len() != value.numel() {
            return Err(NumericsError::ShapeMismatch {
                op: "mask",
                lhs: value.shape().to_vec(),
                rhs: vec![keep.len()],
            });
        }
        let data = value
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect();
        let out = Tensor::new(value.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Mask(x, keep), rg))
    }

    /// Concatenates along the last axis; leading axes must match.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (p, q) = (*sa.last().unwrap(), *sb.last().unwrap());
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = p + q;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for (ra, rb) in da.chunks_exact(p).zip(db.chunks_exact(q)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::ConcatLast(a, b), rg))
    }

    /// Row lookup into a `[rows, width]` table, giving `[indices.len(), width]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 || indices.iter().any(|&i| i >= shape[0]) || indices.is_empty() {
            return Err(NumericsError::InvalidShape {
                op: "gather_rows",
                shape,
                reason: "expects a rank-2 table and in-range, nonempty indices",
            });
        }
        let width = shape[1];
        let d = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            data.extend_from_slice(&d[i * width..(i + 1) * width]);
        }
        let rg = self.rg(table);
        let value = Tensor::new([indices.len(), width], data)?;
        Ok(self.push(value, Op::GatherRows(table, indices.to_vec()), rg))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        let n = match shape.last() {
            Some(&n) if n >= 1 => n,
            _ => {
                return Err(NumericsError::InvalidShape {
                    op: "layer_norm",
                    shape,
                    reason: "needs a nonempty last axis",
                })
            }
        };
        for p in [gamma, beta] {
            if self.shape(p) != [n] {
                return Err(NumericsError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let xd = self.value(x).data();
        let rows = xd.len() / n;
        let mut normalized = Vec::with_capacity(xd.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xd.len());
        for row in xd.chunks_exact(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * is;
                normalized.push(xh);
                out.push(xh * g[j] + b[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            normalized,
            inv_std,
        };
        Ok(self.push(Tensor::new(shape, out)?, op, rg))
    }

    /// Real FFT over the last axis, returning `(real, imaginary)` half spectra.
    pub fn real_fft(&mut self, x: Var) -> Result<(Var, Var), NumericsError> {
        let (re, im) = fft::real_fft(self.value(x))?;
        let rg = self.rg(x);
        let vr = self.push(re, Op::RealFft { x, imag: false }, rg);
        let vi = self.push(im, Op::RealFft { x, imag: true }, rg);
        Ok((vr, vi))
    }

    /// Inverse of [`Tape::real_fft`] producing signals of length `n`.
    pub fn inverse_real_fft(&mut self, re: Var, im: Var, n: usize) -> Result<Var, NumericsError> {
        let value = fft::inverse_real_fft(self.value(re), self.value(im), n)?;
        let rg = self.rg(re) || self.rg(im);
        Ok(self.push(value, Op::InverseRealFft { re, im }, rg))
    }

    /// Reverse sweep from a single-element `loss`, storing gradients on every
    /// node that requires one. Gradients from a previous sweep are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        let loss_shape = self.shape(loss).to_vec();
        if self.value(loss).numel() != 1 {
            return Err(NumericsError::NonScalarRoot { shape: loss_shape });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            let shape = self.nodes[id].value.shape().to_vec();
            self.nodes[id].grad = Some(Tensor::new(shape, g).expect("gradient shape"));
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Unary(kind, x) => {
                if !self.rg(*x) {
                    return;
                }
                let xd = self.value(*x).data();
                let acc = slot(grads, *x, xd.len());
                match kind {
                    Unary::Relu => {
                        for i in 0..xd.len() {
                            if xd[i] > 0.0 {
                                acc[i] += g[i];
                            }
                        }
                    }
                    Unary::Tanh => {
                        for i in 0..xd.len() {
                            acc[i] += g[i] * (1.0 - out[i] * out[i]);
                        }
                    }
                    Unary::Gelu => {
                        for i in 0..xd.len() {
                            acc[i] += g[i] * gelu_derivative(xd[i]);
                        }
                    }
                    Unary::Abs => {
                        for i in 0..xd.len() {
                            if xd[i] != 0.0 {
                                acc[i] += g[i] * xd[i].signum();
                            }
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                let shape = node.value.shape();
                let (va, vb) = (self.value(*a), self.value(*b));
                let ba = Broadcast::new(shape, va.shape());
                let bb = Broadcast::new(shape, vb.shape());
                let (da, db) = (va.data(), vb.data());
                let n = g.len();
                if self.rg(*a) {
                    let acc = slot(grads, *a, da.len());
                    let pairs = ba.indices(n).zip(bb.indices(n)).enumerate();
                    match kind {
                        Binary::Add | Binary::Sub => {
                            for (i, (ia, _)) in pairs {
                                acc[ia] += g[i];
                            }
                        }
                        Binary::Mul => {
                            for (i, (ia, ib)) in pairs {
                                acc[ia] += g[i] * db[ib];
                            }
                        }
                        Binary::Div => {
                            for (i, (ia, ib)) in pairs {
                                acc[ia] += g[i] / db[ib];
                            }
                        }
                    }
                }
                if self.rg(*b) {
                    let acc = slot(grads, *b, db.len());
                    let pairs = ba.indices(n).zip(bb.indices(n)).enumerate();
                    match kind {
                        Binary::Add => {
                            for (i, (_, ib)) in pairs {
                                acc[ib] += g[i];
                            }
                        }
                        Binary::Sub => {
                            for (i, (_, ib)) in pairs {
                                acc[ib] += -g[i];
                            }
                        }
                        Binary::Mul => {
                            for (i, (ia, ib)) in pairs {
                                acc[ib] += g[i] * da[ia];
                            }
                        }
                        Binary::Div => {
                            for (i, (_, ib)) in pairs {
                                acc[ib] += -g[i] * out[i] / db[ib];
                            }
                        }
                    }
                }
            }
            Op::Scale(x, factor) => {
                if self.rg(*x) {
                    let acc = slot(grads, *x, g.len());
                    for i in 0..g.len() {
                        acc[i] += g[i] * factor;
                    }
                }
            }
            Op::Offset(x) | Op::Reshape(x) => {
                if self.rg(*x) {
                    let acc = slot(grads, *x, g.len());
                    for i in 0..g.len() {
                        acc[i] += g[i];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let plan = MatMulPlan::new(va.shape(), vb.shape()).expect("validated in forward");
                let (batch, p) = plan.folded();
                let (q, r) = (plan.q, plan.r);
                if self.rg(*a) {
                    let acc = slot(grads, *a, va.numel());
                    for bi in 0..batch {
                        let ao = plan.a_map.at(bi) * p * q;
                        let bo = plan.b_map.at(bi) * q * r;
                        let co = bi * p * r;
                        gemm_a_bt_acc(
                            &g[co..co + p * r],
                            &vb.data()[bo..bo + q * r],
                            &mut acc[ao..ao + p * q],
                            p,
                            r,
                            q,
                        );
                    }
                }
                if self.rg(*b) {
                    let acc = slot(grads, *b, vb.numel());
                    for bi in 0..batch {
                        let ao = plan.a_map.at(bi) * p * q;
                        let bo = plan.b_map.at(bi) * q * r;
                        let co = bi * p * r;
                        gemm_at_b_acc(
                            &va.data()[ao..ao + p * q],
                            &g[co..co + p * r],
                            &mut acc[bo..bo + q * r],
                            p,
                            q,
                            r,
                        );
                    }
                }
            }
            Op::TransposeLast2(x) => {
                if self.rg(*x) {
                    let s = node.value.shape();
                    let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
                    let back = transpose_blocks(g, rows, cols);
                    let acc = slot(grads, *x, g.len());
                    for i in 0..g.len() {
                        acc[i] += back[i];
                    }
                }
            }
            Op::BroadcastTo(x) => {
                if self.rg(*x) {
                    let src = self.value(*x);
                    let map = Broadcast::new(node.value.shape(), src.shape());
                    let acc = slot(grads, *x, src.numel());
                    for i in 0..g.len() {
                        acc[map.at(i)] += g[i];
                    }
                }
            }
            Op::SumAll(x) => {
                if self.rg(*x) {
                    let n = self.value(*x).numel();
                    let acc = slot(grads, *x, n);
                    for v in acc.iter_mut() {
                        *v += g[0];
                    }
                }
            }
            Op::SumLast(x) => {
                if self.rg(*x) {
                    let src = self.value(*x);
                    let n = *src.shape().last().unwrap_or(&1);
                    let acc = slot(grads, *x, src.numel());
                    for (row, chunk) in acc.chunks_exact_mut(n).enumerate() {
                        for v in chunk {
                            *v += g[row];
                        }
                    }
                }
            }
            Op::Mask(x, keep) => {
                if self.rg(*x) {
                    let acc = slot(grads, *x, g.len());
                    for i in 0..g.len() {
                        if keep[i] {
                            acc[i] += g[i];
                        }
                    }
                }
            }
            Op::ConcatLast(a, b) => {
                let p = *self.shape(*a).last().unwrap();
                let q = *self.shape(*b).last().unwrap();
                let rows = g.len() / (p + q);
                if self.rg(*a) {
                    let acc = slot(grads, *a, rows * p);
                    for row in 0..rows {
                        for j in 0..p {
                            acc[row * p + j] += g[row * (p + q) + j];
                        }
                    }
                }
                if self.rg(*b) {
                    let acc = slot(grads, *b, rows * q);
                    for row in 0..rows {
                        for j in 0..q {
                            acc[row * q + j] += g[row * (p + q) + p + j];
                        }
                    }
                }
            }
            Op::GatherRows(table, indices) => {
                if self.rg(*table) {
                    let src = self.value(*table);
                    let width = src.shape()[1];
                    let acc = slot(grads, *table, src.numel());
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..width {
                            acc[i * width + j] += g[k * width + j];
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let n = self.shape(*gamma)[0];
                let gd = self.value(*gamma).data();
                if self.rg(*gamma) {
                    let acc = slot(grads, *gamma, n);
                    for (row_g, row_x) in g.chunks_exact(n).zip(normalized.chunks_exact(n)) {
                        for j in 0..n {
                            acc[j] += row_g[j] * row_x[j];
                        }
                    }
                }
                if self.rg(*beta) {
                    let acc = slot(grads, *beta, n);
                    for row_g in g.chunks_exact(n) {
                        for j in 0..n {
                            acc[j] += row_g[j];
                        }
                    }
                }
                if self.rg(*x) {
                    let acc = slot(grads, *x, g.len());
                    let inv_n = 1.0 / n as f64;
                    for (row, ((row_g, row_x), row_acc)) in g
                        .chunks_exact(n)
                        .zip(normalized.chunks_exact(n))
                        .zip(acc.chunks_exact_mut(n))
                        .enumerate()
                    {
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..n {
                            let dxh = row_g[j] * gd[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * row_x[j];
                        }
                        mean_dxh *= inv_n;
                        mean_dxh_xh *= inv_n;
                        let is = inv_std[row];
                        for j in 0..n {
                            let dxh = row_g[j] * gd[j];
                            row_acc[j] += is * (dxh - mean_dxh - row_x[j] * mean_dxh_xh);
                        }
                    }
                }
            }
            Op::RealFft { x, imag } => {
                if self.rg(*x) {
                    let src = self.value(*x);
                    let n = *src.shape().last().unwrap();
                    let acc = slot(grads, *x, src.numel());
                    if *imag {
                        fft::real_fft_adjoint(None, Some(g), n, acc);
                    } else {
                        fft::real_fft_adjoint(Some(g), None, n, acc);
                    }
                }
            }
            Op::InverseRealFft { re, im } => {
                let n = *node.value.shape().last().unwrap();
                let numel = self.value(*re).numel();
                if self.rg(*re) {
                    let acc = slot(grads, *re, numel);
                    fft::inverse_real_fft_adjoint(g, n, Some(acc), None);
                }
                if self.rg(*im) {
                    let acc = slot(grads, *im, numel);
                    fft::inverse_real_fft_adjoint(g, n, None, Some(acc));
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn binary_name(kind: Binary) -> &'static str {
    match kind {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "hadamard",
        Binary::Div => "div",
    }
}

struct MatMulPlan {
    batch: usize,
    p: usize,
    q: usize,
    r: usize,
    a_map: Broadcast,
    b_map: Broadcast,
    out_shape: Vec<usize>,
}

impl MatMulPlan {
    /// When `b` carries no batch axes, every batch of `a` multiplies the same
    /// matrix and the batches fold into one taller product.
    fn folded(&self) -> (usize, usize) {
        match self.b_map {
            Broadcast::Cycle(1) if matches!(self.a_map, Broadcast::Same) => (1, self.batch * self.p),
            _ => (self.batch, self.p),
        }
    }

    fn new(sa: &[usize], sb: &[usize]) -> Result<Self, NumericsError> {
        let mismatch = || NumericsError::ShapeMismatch {
            op: "matmul",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (p, q) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (q2, r) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if q != q2 {
            return Err(mismatch());
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch_shape = broadcast_shapes(ba, bb).ok_or_else(mismatch)?;
        let batch = batch_shape.iter().product();
        let a_map = Broadcast::new(&batch_shape, ba);
        let b_map = Broadcast::new(&batch_shape, bb);
        let mut out_shape = batch_shape;
        out_shape.extend([p, r]);
        Ok(Self {
            batch,
            p,
            q,
            r,
            a_map,
            b_map,
            out_shape,
        })
    }
}

/// `c[p x r] += a[p x q] * b[q x r]`
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let c_row = &mut c[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let b_row = &b[k * r..(k + 1) * r];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
}

/// `c[p x q] += g[p x r] * b[q x r]^T`
fn gemm_a_bt_acc(g: &[f64], b: &[f64], c: &mut [f64], p: usize, r: usize, q: usize) {
    let bt = transpose_blocks(b, q, r);
    gemm_acc(g, &bt, c, p, r, q);
}

/// `c[q x r] += a[p x q]^T * g[p x r]`
fn gemm_at_b_acc(a: &[f64], g: &[f64], c: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let g_row = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let c_row = &mut c[k * r..(k + 1) * r];
            for (cv, &gv) in c_row.iter_mut().zip(g_row) {
                *cv += aik * gv;
            }
        }
    }
}

fn transpose_blocks(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    let block = rows * cols;
    for (src, dst) in data.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for i in 0..rows {
            for j in 0..cols {
                dst[j * rows + i] = src[i * cols + j];
            }
        }
    }
    out
}
