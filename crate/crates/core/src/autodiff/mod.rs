//! Tape-based reverse-mode differentiation over 2-D `f64` tensors.
//!
//! The op set is closed: exactly what the encoder, the MLP heads and the
//! contrastive losses need. Every op records its inputs and whatever it
//! must save for the backward pass; [`Tape::backward`] walks the records in
//! reverse once.
//!
//! Gradients stop at [`Tape::detach`]: the detached node is a fresh leaf
//! with no route back to its source.

mod gradcheck;

pub use gradcheck::{finite_diff_check, standard_suite, GradCheckReport, GRAD_TOL};

use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, SparseMatrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn id(&self) -> usize {
        self.id
    }
}

/// Batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }
}

pub const BN_EPS: f64 = 1e-5;
/// Weight kept by the running statistics at each training-mode update.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug)]
enum Op<'a> {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    SpmmConst(&'a SparseMatrix, usize),
    DenseConst(&'a DenseMatrix, usize),
    AddRowBias(usize, usize),
    Prelu(usize, usize),
    BatchNorm {
        x: usize,
        scale: usize,
        shift: usize,
        x_hat: DenseMatrix,
        inv_std: Vec<f64>,
        training: bool,
    },
    L2Normalize {
        x: usize,
        inv_norm: Vec<f64>,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Neg(usize),
    Log(usize),
    Exp(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    Diag(usize),
}

#[derive(Debug)]
struct Node<'a> {
    value: DenseMatrix,
    requires_grad: bool,
    op: Op<'a>,
}

/// Records forward computation for one backward pass.
///
/// Constant operators (propagation matrices, masks) are borrowed for the
/// tape's lifetime rather than copied.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<DenseMatrix>>,
    backward_done: bool,
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::dim(op, format!("{a:?} vs {b:?}"))
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, requires_grad: bool, op: Op<'a>) -> Tensor {
        let (rows, cols) = value.shape();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Tensor { id, rows, cols }
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Tensor {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Tensor {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, t: Tensor) -> &DenseMatrix {
        &self.nodes[t.id].value
    }

    pub fn scalar(&self, t: Tensor) -> f64 {
        self.nodes[t.id].value.values()[0]
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.id].requires_grad
    }

    /// Same values, no gradient path back to `x`.
    pub fn detach(&mut self, x: Tensor) -> Tensor {
        let v = self.nodes[x.id].value.clone();
        self.push(v, false, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a.id, b.id]);
        Ok(self.push(v, rg, Op::MatMul(a.id, b.id)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.rg(&[a.id, b.id]);
        Ok(self.push(v, rg, Op::MatMulNt(a.id, b.id)))
    }

    /// `S · x` with `S` held constant.
    pub fn spmm_const(&mut self, s: &'a SparseMatrix, x: Tensor) -> Result<Tensor> {
        let v = s.spmm(self.value(x))?;
        let rg = self.rg(&[x.id]);
        Ok(self.push(v, rg, Op::SpmmConst(s, x.id)))
    }

    /// `S · x` with a constant dense `S`.
    pub fn dense_const_matmul(&mut self, s: &'a DenseMatrix, x: Tensor) -> Result<Tensor> {
        let v = s.matmul(self.value(x))?;
        let rg = self.rg(&[x.id]);
        Ok(self.push(v, rg, Op::DenseConst(s, x.id)))
    }

    /// Adds the `1×C` row `b` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        if b.rows != 1 || b.cols != x.cols {
            return Err(shape_err("add_row_bias", x.shape(), b.shape()));
        }
        let mut v = self.value(x).clone();
        let bias = self.value(b).values().to_vec();
        for i in 0..v.n_rows() {
            for (o, bj) in v.row_mut(i).iter_mut().zip(&bias) {
                *o += bj;
            }
        }
        let rg = self.rg(&[x.id, b.id]);
        Ok(self.push(v, rg, Op::AddRowBias(x.id, b.id)))
    }

    /// `max(x, 0) + a·min(x, 0)` with a learnable `1×1` slope `a`.
    pub fn prelu(&mut self, x: Tensor, slope: Tensor) -> Result<Tensor> {
        if slope.shape() != (1, 1) {
            return Err(shape_err("prelu", (1, 1), slope.shape()));
        }
        let a = self.scalar(slope);
        let xv = self.value(x);
        let v = DenseMatrix::from_raw(
            xv.n_rows(),
            xv.n_cols(),
            xv.values().iter().map(|&z| if z > 0.0 { z } else { a * z }).collect(),
        );
        let rg = self.rg(&[x.id, slope.id]);
        Ok(self.push(v, rg, Op::Prelu(x.id, slope.id)))
    }

    /// Column-wise batch normalization with affine `scale`/`shift` (`1×C`).
    ///
    /// Training mode normalizes with the batch statistics (biased
    /// variance), differentiates through them, and folds them into
    /// `stats` (unbiased variance). Eval mode normalizes with `stats`.
    pub fn batchnorm_rows(
        &mut self,
        x: Tensor,
        scale: Tensor,
        shift: Tensor,
        stats: &mut BnStats,
        training: bool,
    ) -> Result<Tensor> {
        let (n, c) = x.shape();
        if scale.shape() != (1, c) || shift.shape() != (1, c) {
            return Err(shape_err("batchnorm_rows", (1, c), scale.shape()));
        }
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(shape_err("batchnorm_rows", (1, c), (1, stats.mean.len())));
        }
        if training && n < 2 {
            return Err(Error::Autodiff(
                "batch norm in training mode needs at least 2 rows".into(),
            ));
        }
        let xv = self.value(x);
        let (mean, inv_std) = if training {
            let mut mean = vec![0.0; c];
            for row in xv.rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; c];
            for row in xv.rows() {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let unbiased = n as f64 / (n as f64 - 1.0);
            for j in 0..c {
                let biased = var[j] / n as f64;
                stats.mean[j] = BN_MOMENTUM * stats.mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                stats.var[j] = BN_MOMENTUM * stats.var[j] + (1.0 - BN_MOMENTUM) * biased * unbiased;
                var[j] = 1.0 / (biased + BN_EPS).sqrt();
            }
            (mean, var)
        } else {
            (
                stats.mean.clone(),
                stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect(),
            )
        };
        let x_hat = DenseMatrix::from_fn(n, c, |i, j| (xv.get(i, j) - mean[j]) * inv_std[j]);
        let g = self.value(scale).values();
        let b = self.value(shift).values();
        let v = DenseMatrix::from_fn(n, c, |i, j| g[j] * x_hat.get(i, j) + b[j]);
        let rg = self.rg(&[x.id, scale.id, shift.id]);
        Ok(self.push(
            v,
            rg,
            Op::BatchNorm {
                x: x.id,
                scale: scale.id,
                shift: shift.id,
                x_hat,
                inv_std,
                training,
            },
        ))
    }

    /// Scales every row to unit L2 norm. A zero row stays zero and passes
    /// no gradient.
    pub fn l2_normalize_rows(&mut self, x: Tensor) -> Tensor {
        let xv = self.value(x);
        let norms: Vec<f64> = xv.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let v = DenseMatrix::from_fn(x.rows, x.cols, |i, j| {
            if norms[i] > 0.0 {
                xv.get(i, j) / norms[i]
            } else {
                0.0
            }
        });
        let inv_norm = norms.iter().map(|&n| if n > 0.0 { 1.0 / n } else { 0.0 }).collect();
        let rg = self.rg(&[x.id]);
        self.push(v, rg, Op::L2Normalize { x: x.id, inv_norm })
    }

    fn zip(&mut self, a: Tensor, b: Tensor, name: &'static str, op: Op<'a>, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err(name, a.shape(), b.shape()));
        }
        let v = self.value(a).zip_with(self.value(b), name, f)?;
        let rg = self.rg(&[a.id, b.id]);
        Ok(self.push(v, rg, op))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.zip(a, b, "add", Op::Add(a.id, b.id), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.zip(a, b, "sub", Op::Sub(a.id, b.id), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.zip(a, b, "mul", Op::Mul(a.id, b.id), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let v = self.value(a).scale(c);
        let rg = self.rg(&[a.id]);
        self.push(v, rg, Op::Scale(a.id, c))
    }

    pub fn neg(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a).scale(-1.0);
        let rg = self.rg(&[a.id]);
        self.push(v, rg, Op::Neg(a.id))
    }

    fn map(&mut self, a: Tensor, op: Op<'a>, f: fn(f64) -> f64) -> Tensor {
        let xv = self.value(a);
        let v = DenseMatrix::from_raw(xv.n_rows(), xv.n_cols(), xv.values().iter().map(|&z| f(z)).collect());
        let rg = self.rg(&[a.id]);
        self.push(v, rg, op)
    }

    pub fn log(&mut self, a: Tensor) -> Tensor {
        self.map(a, Op::Log(a.id), f64::ln)
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        self.map(a, Op::Exp(a.id), f64::exp)
    }

    /// Sum of all entries, as a `1×1` tensor.
    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.value(a).values().iter().sum();
        let rg = self.rg(&[a.id]);
        self.push(DenseMatrix::from_raw(1, 1, vec![s]), rg, Op::Sum(a.id))
    }

    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let xv = self.value(a).values();
        let m = xv.iter().sum::<f64>() / xv.len().max(1) as f64;
        let rg = self.rg(&[a.id]);
        self.push(DenseMatrix::from_raw(1, 1, vec![m]), rg, Op::Mean(a.id))
    }

    /// `N×M → N×1` row sums.
    pub fn sum_rows(&mut self, a: Tensor) -> Tensor {
        let v: Vec<f64> = self.value(a).rows().map(|r| r.iter().sum()).collect();
        let rg = self.rg(&[a.id]);
        self.push(DenseMatrix::from_raw(a.rows, 1, v), rg, Op::SumRows(a.id))
    }

    /// Diagonal of a square matrix as an `N×1` column.
    pub fn diag(&mut self, a: Tensor) -> Result<Tensor> {
        if a.rows != a.cols {
            return Err(shape_err("diag", a.shape(), (a.rows, a.rows)));
        }
        let xv = self.value(a);
        let v: Vec<f64> = (0..a.rows).map(|i| xv.get(i, i)).collect();
        let rg = self.rg(&[a.id]);
        Ok(self.push(DenseMatrix::from_raw(a.rows, 1, v), rg, Op::Diag(a.id)))
    }

    /// Accumulates `d loss / d node` for every node on a gradient path.
    ///
    /// A second call without [`zero_grad`](Self::zero_grad) is an error.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.shape() != (1, 1) {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got {:?}",
                loss.shape()
            )));
        }
        if self.backward_done {
            return Err(Error::Autodiff(
                "backward called twice without zero_grad".into(),
            ));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.id].requires_grad {
            return Ok(());
        }
        self.grads[loss.id] = Some(DenseMatrix::from_raw(1, 1, vec![1.0]));
        for id in (0..=loss.id).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            if self.nodes[id].requires_grad {
                self.propagate(id, &g)?;
            }
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, delta: DenseMatrix) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut self.grads[id] {
            Some(g) => {
                for (a, d) in g.values_mut().iter_mut().zip(delta.values()) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, id: usize, g: &DenseMatrix) -> Result<()> {
        let nodes = &self.nodes;
        let val = |i: usize| &nodes[i].value;
        let mut out: Vec<(usize, DenseMatrix)> = Vec::with_capacity(3);
        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[*a].requires_grad {
                    out.push((*a, g.matmul_nt(val(*b))?));
                }
                if nodes[*b].requires_grad {
                    out.push((*b, val(*a).matmul_tn(g)?));
                }
            }
            Op::MatMulNt(a, b) => {
                if nodes[*a].requires_grad {
                    out.push((*a, g.matmul(val(*b))?));
                }
                if nodes[*b].requires_grad {
                    out.push((*b, g.matmul_tn(val(*a))?));
                }
            }
            Op::SpmmConst(s, x) => out.push((*x, s.spmm_transpose(g)?)),
            Op::DenseConst(s, x) => out.push((*x, s.matmul_tn(g)?)),
            Op::AddRowBias(x, b) => {
                out.push((*x, g.clone()));
                if nodes[*b].requires_grad {
                    out.push((*b, column_sums(g)));
                }
            }
            Op::Prelu(x, slope) => {
                let xv = val(*x);
                let a = val(*slope).values()[0];
                let dx: Vec<f64> = xv
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&z, &gz)| if z > 0.0 { gz } else { a * gz })
                    .collect();
                out.push((*x, DenseMatrix::from_raw(xv.n_rows(), xv.n_cols(), dx)));
                let da: f64 = xv
                    .values()
                    .iter()
                    .zip(g.values())
                    .filter(|(&z, _)| z <= 0.0)
                    .map(|(&z, &gz)| z * gz)
                    .sum();
                out.push((*slope, DenseMatrix::from_raw(1, 1, vec![da])));
            }
            Op::BatchNorm {
                x,
                scale,
                shift,
                x_hat,
                inv_std,
                training,
            } => {
                let (n, c) = x_hat.shape();
                let gamma = val(*scale).values();
                let mut d_gamma = vec![0.0; c];
                let mut d_beta = vec![0.0; c];
                for i in 0..n {
                    for j in 0..c {
                        d_gamma[j] += g.get(i, j) * x_hat.get(i, j);
                        d_beta[j] += g.get(i, j);
                    }
                }
                let dx = if *training {
                    // dx = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂⊙x̂)), with dx̂ = g·γ
                    let nf = n as f64;
                    DenseMatrix::from_fn(n, c, |i, j| {
                        let dxh = g.get(i, j) * gamma[j];
                        let sum_dxh = d_beta[j] * gamma[j];
                        let sum_dxh_xh = d_gamma[j] * gamma[j];
                        inv_std[j] / nf * (nf * dxh - sum_dxh - x_hat.get(i, j) * sum_dxh_xh)
                    })
                } else {
                    DenseMatrix::from_fn(n, c, |i, j| g.get(i, j) * gamma[j] * inv_std[j])
                };
                out.push((*x, dx));
                out.push((*scale, DenseMatrix::from_raw(1, c, d_gamma)));
                out.push((*shift, DenseMatrix::from_raw(1, c, d_beta)));
            }
            Op::L2Normalize { x, inv_norm } => {
                // y = x/‖x‖ ; dx = (g − y·⟨y, g⟩)/‖x‖
                let y = &nodes[id].value;
                let (n, c) = y.shape();
                let mut dx = DenseMatrix::zeros(n, c);
                for i in 0..n {
                    if inv_norm[i] == 0.0 {
                        continue;
                    }
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (&yv, &gv)) in dx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = (gv - yv * dot) * inv_norm[i];
                    }
                }
                out.push((*x, dx));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.scale(-1.0)));
            }
            Op::Mul(a, b) => {
                out.push((*a, g.zip_with(val(*b), "mul", |p, q| p * q)?));
                out.push((*b, g.zip_with(val(*a), "mul", |p, q| p * q)?));
            }
            Op::Scale(a, c) => out.push((*a, g.scale(*c))),
            Op::Neg(a) => out.push((*a, g.scale(-1.0))),
            Op::Log(a) => out.push((*a, g.zip_with(val(*a), "log", |p, q| p / q)?)),
            Op::Exp(a) => out.push((*a, g.zip_with(&nodes[id].value, "exp", |p, q| p * q)?)),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                out.push((*a, DenseMatrix::filled(r, c, g.values()[0])));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                out.push((*a, DenseMatrix::filled(r, c, g.values()[0] / (r * c).max(1) as f64)));
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                out.push((*a, DenseMatrix::from_fn(r, c, |i, _| g.values()[i])));
            }
            Op::Diag(a) => {
                let (r, c) = val(*a).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    d.set(i, i, g.values()[i]);
                }
                out.push((*a, d));
            }
        }
        for (target, delta) in out {
            self.accumulate(target, delta);
        }
        Ok(())
    }

    /// Gradient of the last backward pass w.r.t. `t`; zeros when no
    /// gradient reached it.
    pub fn grad(&self, t: Tensor) -> DenseMatrix {
        self.grads
            .get(t.id)
            .and_then(Option::as_ref)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(t.rows, t.cols))
    }

    /// True if the last backward pass produced a gradient buffer for `t`.
    pub fn has_grad(&self, t: Tensor) -> bool {
        matches!(self.grads.get(t.id), Some(Some(_)))
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }
}

fn column_sums(g: &DenseMatrix) -> DenseMatrix {
    let mut s = vec![0.0; g.n_cols()];
    for row in g.rows() {
        for (a, v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    DenseMatrix::from_raw(1, g.n_cols(), s)
}
