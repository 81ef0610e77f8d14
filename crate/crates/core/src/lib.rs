//! Self-supervised node representation learning with a Siamese graph
//! network.
//!
//! The online branch (GCN encoder, projector, predictor) is trained by
//! gradient descent on a blend of cross-network and cross-view contrastive
//! objectives; the target branch (encoder, projector) follows the online one
//! by exponential moving average. Two augmented views are drawn per epoch:
//! subsampling + edge modification + feature masking for the first, and
//! subsampling + PPR diffusion + feature masking for the second.
//!
//! Everything numeric is implemented here: CSR sparse kernels, PPR
//! diffusion (dense solve and truncated power series), a small tape-based
//! reverse-mode differentiation engine, Adam, and a logistic-regression
//! probe for the linear evaluation protocol.
//!
//! ```no_run
//! use merit::graph::io::load_graph;
//! use merit::trainer::{fit, TrainConfig};
//!
//! let graph = load_graph("edges.txt".as_ref(), "features.txt".as_ref(), None).unwrap();
//! let cfg = TrainConfig::default();
//! let (model, _log) = fit(&graph, &cfg).unwrap();
//! ```

pub mod augment;
pub mod autodiff;
pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod model;
pub mod parallel;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{DataSplit, DenseMatrix, Graph, SparseMatrix};
