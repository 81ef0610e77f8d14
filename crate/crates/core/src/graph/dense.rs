use ndarray::linalg::general_mat_mul;
use ndarray::{s, ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parallel::{fast_mode, PAR_MIN_ROWS};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major values, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::dim(
                "DenseMatrix::from_vec",
                format!("{} values for a {n_rows}x{n_cols} matrix", values.len()),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at ({}, {})",
                pos / n_cols.max(1),
                pos % n_cols.max(1)
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Same as [`from_vec`](Self::from_vec) without the finiteness scan.
    /// Panics on a length mismatch.
    pub(crate) fn from_raw(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_rows * n_cols, "dense shape mismatch");
        Self {
            n_rows,
            n_cols,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::dim("DenseMatrix::from_rows", "ragged rows"));
        }
        Self::from_vec(n_rows, n_cols, rows.concat())
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                values.push(f(i, j));
            }
        }
        Self {
            n_rows,
            n_cols,
            values,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.n_cols;
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out.values[j * self.n_rows + i] = self.values[i * self.n_cols + j];
            }
        }
        out
    }

    /// Rows `[start, start + size)` and the same column window.
    pub fn principal_submatrix(&self, start: usize, size: usize) -> Result<Self> {
        if self.n_rows != self.n_cols {
            return Err(Error::dim(
                "principal_submatrix",
                format!("{}x{} is not square", self.n_rows, self.n_cols),
            ));
        }
        if start + size > self.n_rows {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {}) exceeds dimension {}",
                start + size,
                self.n_rows
            )));
        }
        Ok(Self::from_fn(size, size, |i, j| self.get(start + i, start + j)))
    }

    /// Contiguous row block `[start, start + size)`.
    pub fn row_block(&self, start: usize, size: usize) -> Result<Self> {
        if start + size > self.n_rows {
            return Err(Error::InvalidParameter(format!(
                "row window [{start}, {}) exceeds {} rows",
                start + size,
                self.n_rows
            )));
        }
        let c = self.n_cols;
        Ok(Self::from_raw(
            size,
            c,
            self.values[start * c..(start + size) * c].to_vec(),
        ))
    }

    /// Gathers the listed rows in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.n_cols, values)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::from_raw(
            self.n_rows,
            self.n_cols,
            self.values.iter().map(|v| a * v).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Self::from_raw(
            self.n_rows,
            self.n_cols,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, false)
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, true)
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        gemm(self, true, other, false)
    }

    pub(crate) fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_rows, self.n_cols), &self.values)
            .expect("dense view shape")
    }
}

/// `op(a) · op(b)` where `op` optionally transposes.
///
/// Each output row is reduced in a fixed order over the inner dimension, so
/// splitting the output rows across threads does not change any bit.
pub fn gemm(a: &DenseMatrix, trans_a: bool, b: &DenseMatrix, trans_b: bool) -> Result<DenseMatrix> {
    let av = if trans_a { a.view().reversed_axes() } else { a.view() };
    let bv = if trans_b { b.view().reversed_axes() } else { b.view() };
    let (m, k) = av.dim();
    let (k2, n) = bv.dim();
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("({m}x{k}) · ({k2}x{n})"),
        ));
    }
    let mut out = DenseMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(out);
    }
    if fast_mode() && m >= PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        let chunk = m.div_ceil(rayon::current_num_threads() * 2).max(16);
        out.values
            .par_chunks_mut(chunk * n)
            .enumerate()
            .for_each(|(ci, c_chunk)| {
                let r0 = ci * chunk;
                let rows = c_chunk.len() / n;
                let a_blk = av.slice(s![r0..r0 + rows, ..]);
                let mut cv = ArrayViewMut2::from_shape((rows, n), c_chunk).expect("chunk view");
                general_mat_mul(1.0, &a_blk, &bv, 0.0, &mut cv);
            });
    } else {
        let mut cv = ArrayViewMut2::from_shape((m, n), &mut out.values[..]).expect("out view");
        general_mat_mul(1.0, &av, &bv, 0.0, &mut cv);
    }
    Ok(out)
}
