//! Train on a two-block stochastic graph and compare the linear-probe
//! accuracy of the trained encoder with the same encoder before training.
//!
//! cargo run --release --example synthetic_blocks -- [seed] [epochs]

use merit::augment::full_diffusion;
use merit::eval::{probe_accuracy, probe_fit, DEFAULT_ITERS, DEFAULT_L2};
use merit::synthetic::{stochastic_block_graph, SbmConfig};
use merit::trainer::{fit, init_training, prepare_graph, TrainConfig};
use merit::{DenseMatrix, Graph};

fn probe(g: &Graph, h: &DenseMatrix) -> f64 {
    let labels = g.labels.as_ref().unwrap();
    let split = g.splits.as_ref().unwrap();
    let p = probe_fit(h, labels, split, DEFAULT_L2, DEFAULT_ITERS).unwrap();
    probe_accuracy(&p, h, labels, &split.test_idx).unwrap()
}

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(200, |s| s.parse().expect("epochs"));

    let g = stochastic_block_graph(&SbmConfig::default(), seed).unwrap();
    println!("{} nodes, {} edges, {} features", g.num_nodes(), g.num_edges(), g.num_features());

    let mut cfg = TrainConfig {
        epochs,
        latent_dim: 8,
        learning_rate: 2e-3,
        seed,
        ..Default::default()
    };
    cfg.augmentation.ppr_alpha = 0.15;

    let prepared = prepare_graph(&g, &cfg);
    let s = full_diffusion(&prepared, &cfg.augmentation).unwrap();
    let (untrained, _, _) = init_training(&prepared, &cfg).unwrap();
    let before = probe(&g, &untrained.infer_embeddings(&prepared, &s, cfg.readout()).unwrap());

    let t0 = std::time::Instant::now();
    let (model, log) = fit(&g, &cfg).unwrap();
    let after = probe(&g, &model.infer_embeddings(&prepared, &s, cfg.readout()).unwrap());

    let first = log.first().unwrap().losses;
    let last = log.last().unwrap().losses;
    println!("raw features      {:.3}", probe(&g, &g.features));
    println!("untrained encoder {before:.3}");
    println!("trained encoder   {after:.3}");
    println!(
        "loss {:.4} -> {:.4}, pos_sim {:.3} -> {:.3}, {:.1}s",
        first.l_total,
        last.l_total,
        first.pos_sim,
        last.pos_sim,
        t0.elapsed().as_secs_f64()
    );
}
