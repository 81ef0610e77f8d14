use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

use super::AugmentationConfig;
use crate::error::{Error, Result};
use crate::graph::{symmetric_normalize, DenseMatrix, Graph, SparseMatrix};

/// How a view propagates features across its nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum PropagationOperator {
    Sparse(SparseMatrix),
    Dense(DenseMatrix),
}

impl PropagationOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Sparse(s) => s.n_rows(),
            Self::Dense(d) => d.n_rows(),
        }
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Self::Sparse(s) => s.spmm(x),
            Self::Dense(d) => d.matmul(x),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Sparse(s) => s.to_dense(),
            Self::Dense(d) => d.clone(),
        }
    }
}

/// One augmented view: cropped (and masked) features, its propagation
/// operator, and the original index of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphView {
    pub features: DenseMatrix,
    pub operator: PropagationOperator,
    pub node_map: Vec<usize>,
}

impl GraphView {
    pub fn new(features: DenseMatrix, operator: PropagationOperator, node_map: Vec<usize>) -> Result<Self> {
        let s = features.n_rows();
        let op_shape = match &operator {
            PropagationOperator::Sparse(m) => (m.n_rows(), m.n_cols()),
            PropagationOperator::Dense(m) => m.shape(),
        };
        if op_shape != (s, s) || node_map.len() != s {
            return Err(Error::dim(
                "GraphView",
                format!("{s} feature rows, operator {op_shape:?}, {} mapped nodes", node_map.len()),
            ));
        }
        if node_map.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("node_map must be strictly increasing".into()));
        }
        Ok(Self {
            features,
            operator,
            node_map,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.n_rows()
    }
}

/// Drops `⌊(P/2)·E⌋` undirected edges uniformly without replacement, then
/// adds as many uniformly drawn node pairs that are neither self-loops nor
/// edges of the input graph (nor already added).
pub fn edge_modification<R: Rng + ?Sized>(a: &SparseMatrix, p: f64, rng: &mut R) -> Result<SparseMatrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge modification ratio {p} not in [0, 1)")));
    }
    let n = a.n_rows();
    if n != a.n_cols() {
        return Err(Error::dim("edge_modification", "adjacency is not square"));
    }
    let edges: Vec<(usize, usize, f64)> = a.iter().filter(|&(i, j, _)| i < j).collect();
    let e = edges.len();
    // the epsilon keeps exact products such as (2/3)/2·3 from flooring to 0
    let k = ((p / 2.0) * e as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Ok(a.clone());
    }
    let available = n * n.saturating_sub(1) / 2 - e;
    if available < k {
        return Err(Error::TooDense { needed: k, available });
    }

    let dropped: HashSet<usize> = sample(rng, e, k).into_iter().collect();
    let existing: HashSet<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();

    let added: Vec<(usize, usize)> = if available <= 4 * k {
        // near-complete graph: enumerate the free pairs instead of rejecting
        let free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|pr| !existing.contains(pr))
            .collect();
        sample(rng, free.len(), k).into_iter().map(|x| free[x]).collect()
    } else {
        let mut chosen = HashSet::with_capacity(k);
        let mut order = Vec::with_capacity(k);
        while order.len() < k {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let pr = (u.min(v), u.max(v));
            if existing.contains(&pr) || !chosen.insert(pr) {
                continue;
            }
            order.push(pr);
        }
        order
    };

    let kept = edges
        .iter()
        .enumerate()
        .filter(|(idx, _)| !dropped.contains(idx))
        .map(|(_, &t)| t);
    let new = added.into_iter().map(|(i, j)| (i, j, 1.0));
    SparseMatrix::from_triplets(
        n,
        n,
        kept.chain(new).flat_map(|(i, j, w)| [(i, j, w), (j, i, w)]),
    )
}

/// Draws `round(P·D)` distinct feature columns, sorted ascending.
pub fn mask_columns<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("feature mask ratio {p} not in [0, 1)")));
    }
    let k = (p * d as f64).round() as usize;
    let mut cols = sample(rng, d, k.min(d)).into_vec();
    cols.sort_unstable();
    Ok(cols)
}

/// Zeroes `round(P·D)` uniformly chosen feature columns for every node.
pub fn feature_mask<R: Rng + ?Sized>(x: &DenseMatrix, p: f64, rng: &mut R) -> Result<DenseMatrix> {
    let cols = mask_columns(x.n_cols(), p, rng)?;
    Ok(apply_mask(x, &cols))
}

pub(crate) fn apply_mask(x: &DenseMatrix, cols: &[usize]) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.n_rows() {
        let row = out.row_mut(i);
        for &c in cols {
            row[c] = 0.0;
        }
    }
    out
}

/// Start index of a contiguous crop of `s` out of `n` nodes, uniform over
/// `[0, n − s]`.
pub fn subsample_window<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<usize> {
    if s == 0 || s > n {
        return Err(Error::InvalidParameter(format!(
            "subgraph size {s} must be in [1, {n}]"
        )));
    }
    Ok(rng.random_range(0..=n - s))
}

/// Builds the two training views of one step.
///
/// Random draws happen in a fixed order: crop window, edge modification,
/// view-1 mask, view-2 mask.
pub fn make_views<R: Rng + ?Sized>(
    g: &Graph,
    s_full: &DenseMatrix,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<(GraphView, GraphView)> {
    let n = g.num_nodes();
    if s_full.shape() != (n, n) {
        return Err(Error::dim(
            "make_views",
            format!("diffusion is {:?} for {n} nodes", s_full.shape()),
        ));
    }
    let s = cfg.subgraph_size.min(n);
    let start = subsample_window(n, s, rng)?;
    let node_map: Vec<usize> = (start..start + s).collect();

    let a_crop = g.adjacency.principal_submatrix(start, s)?;
    let a_mod = edge_modification(&a_crop, cfg.edge_mod_ratio, rng)?;
    let op1 = symmetric_normalize(&a_mod, true)?;
    let op2 = s_full.principal_submatrix(start, s)?;

    let x_crop = g.features.row_block(start, s)?;
    let x1 = feature_mask(&x_crop, cfg.feature_mask_ratio, rng)?;
    let x2 = feature_mask(&x_crop, cfg.feature_mask_ratio, rng)?;

    Ok((
        GraphView::new(x1, PropagationOperator::Sparse(op1), node_map.clone())?,
        GraphView::new(x2, PropagationOperator::Dense(op2), node_map)?,
    ))
}
