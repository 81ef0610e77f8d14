//! Stochastic block graphs with class-correlated features, for smoke tests
//! and examples.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::seeded_rng;
use crate::error::{Error, Result};
use crate::eval::make_splits_per_class;
use crate::graph::{DenseMatrix, Graph, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    /// Edge probability inside a block.
    pub p_in: f64,
    /// Edge probability across blocks.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Leading feature columns that carry a class-dependent mean.
    pub informative_dims: usize,
    /// Mean offset of the informative columns (`+signal` for the node's own
    /// class slot, `-signal` otherwise).
    pub signal: f64,
    /// Standard deviation of the Gaussian noise on every column.
    pub noise: f64,
    /// Labelled nodes per class for the probe's training set; the same
    /// number goes to validation.
    pub train_per_class: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            block_sizes: vec![100, 100],
            p_in: 0.12,
            p_out: 0.008,
            feature_dim: 256,
            informative_dims: 8,
            signal: 0.1,
            noise: 1.0,
            train_per_class: 5,
        }
    }
}

/// Samples a graph whose node order is a random permutation of the
/// blocks, with labels and a per-class split attached.
pub fn stochastic_block_graph(cfg: &SbmConfig, seed: u64) -> Result<Graph> {
    let n: usize = cfg.block_sizes.iter().sum();
    let c = cfg.block_sizes.len();
    if c < 2 || n < 2 {
        return Err(Error::InvalidParameter("need at least two non-empty blocks".into()));
    }
    for p in [cfg.p_in, cfg.p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p}")));
        }
    }
    if cfg.informative_dims > cfg.feature_dim {
        return Err(Error::InvalidParameter("informative_dims exceeds feature_dim".into()));
    }
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = seeded_rng(seed);

    let mut labels: Vec<usize> = cfg
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    labels.shuffle(&mut rng);

    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;

    let features = DenseMatrix::from_fn(n, cfg.feature_dim, |i, j| {
        let mean = if j < cfg.informative_dims {
            if j % c == labels[i] {
                cfg.signal
            } else {
                -cfg.signal
            }
        } else {
            0.0
        };
        mean + noise.sample(&mut rng)
    });

    let split = make_splits_per_class(&labels, cfg.train_per_class, &mut rng)?;
    Graph::new(features, adjacency, Some(labels), Some(split))
}
