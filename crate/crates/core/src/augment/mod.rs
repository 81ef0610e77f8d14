//! Graph augmentations and PPR diffusion.
//!
//! View 1 = subsample + edge modification + feature masking, propagated
//! with the normalized modified adjacency. View 2 = subsample + diffusion +
//! feature masking, propagated with the matching window of the full-graph
//! PPR matrix. Both views share one crop window so row `i` of either view
//! is the same original node.

mod ppr;
mod views;

pub use ppr::{full_diffusion, ppr_diffusion_exact, ppr_power_series};
pub use views::{
    edge_modification, feature_mask, make_views, mask_columns, subsample_window, GraphView,
    PropagationOperator,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random generator used by every stochastic routine in the crate.
pub type MeritRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> MeritRng {
    use rand::SeedableRng;
    MeritRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprMethod {
    ExactInverse,
    PowerSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub edge_mod_ratio: f64,
    pub feature_mask_ratio: f64,
    /// Crop size; clamped to the node count when the graph is smaller.
    pub subgraph_size: usize,
    /// Teleport probability. `0` disables diffusion: view 2 then uses the
    /// normalized adjacency instead of the PPR matrix.
    pub ppr_alpha: f64,
    pub ppr_method: PprMethod,
    pub power_terms: usize,
    pub power_tol: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            edge_mod_ratio: 0.2,
            feature_mask_ratio: 0.3,
            subgraph_size: 2000,
            ppr_alpha: 0.05,
            ppr_method: PprMethod::ExactInverse,
            power_terms: 1000,
            power_tol: 1e-12,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("edge_mod_ratio", self.edge_mod_ratio),
            ("feature_mask_ratio", self.feature_mask_ratio),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} not in [0, 1)")));
            }
        }
        if self.subgraph_size == 0 {
            return Err(Error::InvalidParameter("subgraph_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ppr_alpha) {
            return Err(Error::InvalidParameter(format!(
                "ppr_alpha = {} not in (0, 1] (or 0 to disable diffusion)",
                self.ppr_alpha
            )));
        }
        if self.power_terms == 0 || !(self.power_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "power_terms must be >= 1 and power_tol >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn diffusion_disabled(&self) -> bool {
        self.ppr_alpha == 0.0
    }
}
