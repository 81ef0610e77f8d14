use super::SparseMatrix;
use crate::error::{Error, Result};

/// GCN propagation operator.
///
/// With `add_self_loops` this is `D̃^{-1/2}(A+I)D̃^{-1/2}`, otherwise
/// `D^{-1/2} A D^{-1/2}`. Nodes with zero degree get a zero row and column.
pub fn symmetric_normalize(a: &SparseMatrix, add_self_loops: bool) -> Result<SparseMatrix> {
    let n = a.n_rows();
    if n != a.n_cols() {
        return Err(Error::dim(
            "symmetric_normalize",
            format!("{}x{} is not square", n, a.n_cols()),
        ));
    }
    let base = if add_self_loops {
        SparseMatrix::from_triplets(n, n, a.iter().chain((0..n).map(|i| (i, i, 1.0))))?
    } else {
        a.clone()
    };
    let inv_sqrt: Vec<f64> = base
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    // the scalar product commutes, so entries (i,j) and (j,i) are bit-equal
    Ok(base.map_values(|i, j, v| v * (inv_sqrt[i] * inv_sqrt[j])))
}

/// `T = D^{-1/2} A D^{-1/2}`, the kernel of the PPR series.
pub fn transition_matrix(a: &SparseMatrix) -> Result<SparseMatrix> {
    symmetric_normalize(a, false)
}
