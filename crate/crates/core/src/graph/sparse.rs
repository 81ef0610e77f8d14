use rayon::prelude::*;

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::parallel::{fast_mode, PAR_MIN_ROWS};

/// Compressed sparse row matrix with strictly increasing column indices
/// inside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validating constructor.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::Validation(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Validation(
                "row_offsets must start at 0 and be non-decreasing".into(),
            ));
        }
        let nnz = row_offsets[n_rows];
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::Validation(format!(
                "row_offsets ends at {nnz} but there are {} columns and {} values",
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "row {r}: column indices not strictly increasing"
                )));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::Validation(format!(
                        "row {r}: column {c} out of range for {n_cols} columns"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::Validation(format!(
                "entry ({r}, {c}) out of range for {n_rows}x{n_cols}"
            )));
        }
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps entries with non-zero value.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..d.n_rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.n_rows(), d.n_cols(), t).expect("indices in range")
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
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |p| vals[p])
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            d.set(i, j, v);
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n_cols, self.n_rows, self.iter().map(|(i, j, v)| (j, i, v)))
            .expect("transpose indices in range")
    }

    /// Exact structural and value symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.iter().all(|(i, j, v)| self.get(j, i) == v && {
            let (cols, _) = self.row(j);
            cols.binary_search(&i).is_ok()
        })
    }

    /// Undirected edge count of a symmetric pattern: off-diagonal entries
    /// counted once per pair.
    pub fn undirected_edge_count(&self) -> usize {
        self.iter().filter(|&(i, j, _)| i < j).count()
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.iter().all(|(i, j, _)| i != j)
    }

    /// Sparse × dense product. Each output row accumulates in ascending
    /// column order.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != x.n_rows() {
            return Err(Error::dim(
                "spmm",
                format!("({}x{}) · ({}x{})", self.n_rows, self.n_cols, x.n_rows(), x.n_cols()),
            ));
        }
        let d = x.n_cols();
        let mut out = DenseMatrix::zeros(self.n_rows, d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |i: usize, out_row: &mut [f64]| {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        };
        if fast_mode() && self.n_rows >= PAR_MIN_ROWS {
            out.values_mut()
                .par_chunks_mut(d)
                .enumerate()
                .for_each(|(i, r)| kernel(i, r));
        } else {
            for (i, r) in out.values_mut().chunks_mut(d).enumerate() {
                kernel(i, r);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x` without materializing the transpose. Scatters serially,
    /// so the reduction order is fixed.
    pub fn spmm_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != x.n_rows() {
            return Err(Error::dim(
                "spmm_transpose",
                format!("({}x{})ᵀ · ({}x{})", self.n_rows, self.n_cols, x.n_rows(), x.n_cols()),
            ));
        }
        let d = x.n_cols();
        let mut out = DenseMatrix::zeros(self.n_cols, d);
        for (i, j, v) in self.iter() {
            let xr = x.row(i);
            for (o, &xv) in out.row_mut(j).iter_mut().zip(xr) {
                *o += v * xv;
            }
        }
        Ok(out)
    }

    /// Rows and columns `[start, start + size)`, re-based to zero.
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
        let end = start + size;
        let mut row_offsets = Vec::with_capacity(size + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in start..end {
            let (cols, vals) = self.row(i);
            let lo = cols.partition_point(|&c| c < start);
            let hi = cols.partition_point(|&c| c < end);
            col_indices.extend(cols[lo..hi].iter().map(|c| c - start));
            values.extend_from_slice(&vals[lo..hi]);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: size,
            n_cols: size,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `P·A·Pᵀ` where row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<Self> {
        if self.n_rows != self.n_cols || perm.len() != self.n_rows {
            return Err(Error::dim("permute_symmetric", "permutation length mismatch"));
        }
        let mut inv = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        Self::from_triplets(
            self.n_rows,
            self.n_cols,
            self.iter().map(|(i, j, v)| (inv[i], inv[j], v)),
        )
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
            for p in a..b {
                out.values[p] = f(i, self.col_indices[p], self.values[p]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validating_constructor_rejects_unsorted_rows() {
        assert!(SparseMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
        assert!(SparseMatrix::new(2, 3, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::new(1, 3, vec![0, 2], vec![0, 2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
    }

    #[test]
    fn identity_and_zero_spmm() {
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 4.5);
        assert_eq!(SparseMatrix::identity(4).spmm(&x).unwrap(), x);
        assert_eq!(
            SparseMatrix::zeros(4, 4).spmm(&x).unwrap(),
            DenseMatrix::zeros(4, 3)
        );
        assert!(SparseMatrix::identity(3).spmm(&x).is_err());
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let a = SparseMatrix::from_triplets(3, 4, [(0, 1, 2.0), (0, 3, -1.0), (2, 0, 0.5)]).unwrap();
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let via_scatter = a.spmm_transpose(&x).unwrap();
        let via_t = a.transpose().spmm(&x).unwrap();
        assert_eq!(via_scatter, via_t);
    }

    #[test]
    fn principal_submatrix_edge_cases() {
        let a = SparseMatrix::from_triplets(3, 3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)])
            .unwrap();
        assert_eq!(a.principal_submatrix(0, 3).unwrap(), a);
        let one = a.principal_submatrix(1, 1).unwrap();
        assert_eq!(one.nnz(), 0);
        assert_eq!(one.n_rows(), 1);
        assert!(a.principal_submatrix(2, 2).is_err());
    }
}
