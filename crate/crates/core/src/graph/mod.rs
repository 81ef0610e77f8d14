//! Graph containers, CSR kernels, GCN normalization and dataset files.

mod dense;
pub mod io;
mod normalize;
mod sparse;

pub use dense::{gemm, DenseMatrix};
pub use normalize::{symmetric_normalize, transition_matrix};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// Disjoint train/validation/test node index sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataSplit {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl DataSplit {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, set) in [
            ("train", &self.train_idx),
            ("val", &self.val_idx),
            ("test", &self.test_idx),
        ] {
            for &i in set {
                if i >= n {
                    return Err(Error::Validation(format!(
                        "{name} index {i} out of range for {n} nodes"
                    )));
                }
                if seen[i] {
                    return Err(Error::Validation(format!(
                        "node {i} appears in more than one split (or twice)"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Attributed undirected graph: features `N×D`, symmetric adjacency `N×N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub features: DenseMatrix,
    pub adjacency: SparseMatrix,
    pub labels: Option<Vec<usize>>,
    pub splits: Option<DataSplit>,
}

impl Graph {
    /// Checks every structural invariant: square symmetric adjacency with
    /// zero diagonal, matching feature/label counts and a valid split.
    pub fn new(
        features: DenseMatrix,
        adjacency: SparseMatrix,
        labels: Option<Vec<usize>>,
        splits: Option<DataSplit>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if adjacency.n_rows() != n || adjacency.n_cols() != n {
            return Err(Error::Validation(format!(
                "adjacency is {}x{} but there are {n} feature rows",
                adjacency.n_rows(),
                adjacency.n_cols()
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Validation("adjacency is not symmetric".into()));
        }
        if !adjacency.has_zero_diagonal() {
            return Err(Error::Validation("adjacency has self-loops".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        if let Some(s) = &splits {
            s.validate(n)?;
        }
        Ok(Self {
            features,
            adjacency,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.n_rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.undirected_edge_count()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Scales each feature row to unit L1 norm; all-zero rows stay zero.
    pub fn row_normalize_features(&mut self) {
        let d = self.features.n_cols();
        if d == 0 {
            return;
        }
        for row in self.features.values_mut().chunks_mut(d) {
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
}
