use nalgebra::DMatrix;

use super::AugmentationConfig;
use super::PprMethod;
use crate::error::{Error, Result};
use crate::graph::{symmetric_normalize, transition_matrix, DenseMatrix, Graph, SparseMatrix};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha = {alpha} not in (0, 1]")))
    }
}

/// `S = α (I − (1−α) D^{-1/2} A D^{-1/2})^{-1}` by Cholesky factorization.
///
/// The system matrix is symmetric with eigenvalues in `[α, 2−α]`, so the
/// factorization only fails on asymmetric or corrupt input.
pub fn ppr_diffusion_exact(a: &SparseMatrix, alpha: f64) -> Result<DenseMatrix> {
    check_alpha(alpha)?;
    let t = transition_matrix(a)?;
    let n = t.n_rows();
    if alpha == 1.0 {
        return Ok(DenseMatrix::identity(n));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, j, v) in t.iter() {
        m[(i, j)] -= (1.0 - alpha) * v;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Solver("I - (1-alpha)T is not positive definite".into()))?;
    let inv = chol.inverse();
    // average the triangles so S is exactly symmetric
    let s = DenseMatrix::from_fn(n, n, |i, j| alpha * 0.5 * (inv[(i, j)] + inv[(j, i)]));
    if !s.is_finite() {
        return Err(Error::Solver("non-finite entries in PPR solve".into()));
    }
    Ok(s)
}

/// Truncated series `Σ_k α(1−α)^k T^k`.
///
/// At most `max_terms` terms are summed; summation stops after the first
/// term whose largest entry is below `tol`.
pub fn ppr_power_series(a: &SparseMatrix, alpha: f64, max_terms: usize, tol: f64) -> Result<DenseMatrix> {
    check_alpha(alpha)?;
    if max_terms == 0 {
        return Err(Error::InvalidParameter("power series needs at least one term".into()));
    }
    let t = transition_matrix(a)?;
    let n = t.n_rows();
    let mut term = DenseMatrix::identity(n).scale(alpha);
    let mut s = term.clone();
    for _ in 1..max_terms {
        if term.max_abs() < tol || alpha == 1.0 {
            break;
        }
        term = t.spmm(&term)?.scale(1.0 - alpha);
        for (acc, v) in s.values_mut().iter_mut().zip(term.values()) {
            *acc += v;
        }
    }
    Ok(s)
}

/// The full-graph operator cropped into view 2: the PPR matrix, or the
/// self-loop normalized adjacency when diffusion is disabled (`α = 0`).
pub fn full_diffusion(g: &Graph, cfg: &AugmentationConfig) -> Result<DenseMatrix> {
    if cfg.diffusion_disabled() {
        return Ok(symmetric_normalize(&g.adjacency, true)?.to_dense());
    }
    match cfg.ppr_method {
        PprMethod::ExactInverse => ppr_diffusion_exact(&g.adjacency, cfg.ppr_alpha),
        PprMethod::PowerSeries => {
            ppr_power_series(&g.adjacency, cfg.ppr_alpha, cfg.power_terms, cfg.power_tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> SparseMatrix {
        SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn alpha_one_is_identity() {
        assert_eq!(ppr_diffusion_exact(&edge(), 1.0).unwrap(), DenseMatrix::identity(2));
        assert_eq!(ppr_power_series(&edge(), 1.0, 50, 0.0).unwrap(), DenseMatrix::identity(2));
    }

    #[test]
    fn two_node_graph_matches_closed_form_inverse() {
        // T = [[0,1],[1,0]]; M = [[1,-c],[-c,1]] with c = 1-α; M⁻¹ = [[1,c],[c,1]]/(1-c²)
        let alpha: f64 = 0.05;
        let c = 1.0 - alpha;
        let det = 1.0 - c * c;
        let expect = DenseMatrix::from_rows(&[
            vec![alpha / det, alpha * c / det],
            vec![alpha * c / det, alpha / det],
        ])
        .unwrap();
        let s = ppr_diffusion_exact(&edge(), alpha).unwrap();
        assert!(s.max_abs_diff(&expect) < 1e-12, "{s:?}");
    }

    #[test]
    fn single_term_is_scaled_identity() {
        let s = ppr_power_series(&edge(), 0.3, 1, 1e-12).unwrap();
        assert_eq!(s, DenseMatrix::identity(2).scale(0.3));
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(ppr_diffusion_exact(&edge(), 0.0).is_err());
        assert!(ppr_power_series(&edge(), 1.5, 3, 0.0).is_err());
        assert!(ppr_power_series(&edge(), 0.5, 0, 0.0).is_err());
    }
}
