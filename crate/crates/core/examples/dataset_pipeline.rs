//! Full pipeline on a dataset directory: load, train, probe, export.
//!
//! Without an argument a synthetic dataset is written to a temporary
//! directory first.
//!
//! cargo run --release --example dataset_pipeline -- [DIR] [epochs]

use std::path::PathBuf;

use merit::eval::{evaluate_embeddings, export_embeddings, report_line, summarize, SplitSource, DEFAULT_ITERS, DEFAULT_L2};
use merit::graph::io::{load_dataset_dir, save_dataset_dir};
use merit::synthetic::{stochastic_block_graph, SbmConfig};
use merit::trainer::{embed, fit_with, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir().unwrap();
    let dir = match args.next() {
        Some(d) => PathBuf::from(d),
        None => {
            let g = stochastic_block_graph(&SbmConfig::default(), 7).unwrap();
            save_dataset_dir(&g, &tmp.path().join("blocks")).unwrap()
        }
    };
    let epochs: usize = args.next().map_or(100, |s| s.parse().expect("epochs"));

    let g = load_dataset_dir(&dir).unwrap();
    println!(
        "{}: {} nodes, {} edges, {} features, {:?} classes",
        dir.display(),
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.num_classes()
    );

    let mut cfg = TrainConfig {
        epochs,
        latent_dim: 64,
        learning_rate: 1e-3,
        ..Default::default()
    };
    cfg.augmentation.ppr_alpha = 0.15;
    let (model, _) = fit_with(&g, &cfg, |row| {
        if row.epoch % 20 == 0 {
            println!("epoch {:>4} loss {:.4}", row.epoch, row.losses.l_total);
        }
    })
    .unwrap();

    let h = embed(&model, &g, &cfg).unwrap();
    let labels = g.labels.as_ref().expect("labels.txt");
    let splits = g.splits.clone().map_or(SplitSource::PerClass(20), SplitSource::Fixed);
    let accs = evaluate_embeddings(&h, labels, &splits, 5, 0, DEFAULT_L2, DEFAULT_ITERS).unwrap();
    println!("{}", report_line("dataset", &summarize(&accs)));

    let out = tmp.path().join("embeddings.txt");
    export_embeddings(&h, &out, Some(labels)).unwrap();
    println!("embeddings written to {}", out.display());
}
