//! Draws the two training views of one step and summarizes what changed.
//!
//! cargo run --example augmentation_views -- [seed]

use merit::augment::{full_diffusion, make_views, seeded_rng, AugmentationConfig, PropagationOperator};
use merit::synthetic::{stochastic_block_graph, SbmConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let g = stochastic_block_graph(&SbmConfig::default(), seed).unwrap();
    let cfg = AugmentationConfig {
        subgraph_size: 120,
        ..Default::default()
    };
    let s = full_diffusion(&g, &cfg).unwrap();
    let (v1, v2) = make_views(&g, &s, &cfg, &mut seeded_rng(seed)).unwrap();

    let start = v1.node_map[0];
    let crop = g.adjacency.principal_submatrix(start, v1.num_nodes()).unwrap();
    println!("crop: nodes {}..{} of {}", start, start + v1.num_nodes(), g.num_nodes());

    if let PropagationOperator::Sparse(op) = &v1.operator {
        let kept = op
            .iter()
            .filter(|&(i, j, _)| i < j && crop.get(i, j) != 0.0)
            .count();
        let total = op.iter().filter(|&(i, j, _)| i < j).count();
        println!(
            "view 1: {} edges before, {} after ({} kept, {} new)",
            crop.undirected_edge_count(),
            total,
            kept,
            total - kept
        );
    }
    let zero_cols = |x: &merit::DenseMatrix| (0..x.n_cols()).filter(|&c| x.rows().all(|r| r[c] == 0.0)).count();
    println!(
        "masked columns: view 1 {}, view 2 {} (of {})",
        zero_cols(&v1.features),
        zero_cols(&v2.features),
        g.num_features()
    );
    let d = v2.operator.to_dense();
    let nnz = d.values().iter().filter(|&&v| v > 1e-4).count();
    println!("view 2 operator: {} of {} entries above 1e-4", nnz, d.values().len());
}
