//! Train briefly, save a checkpoint, load it back and compare embeddings.

use merit::model::{load_checkpoint, save_checkpoint};
use merit::synthetic::{stochastic_block_graph, SbmConfig};
use merit::trainer::{embed, fit, TrainConfig};

fn main() {
    let g = stochastic_block_graph(&SbmConfig::default(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        latent_dim: 16,
        ..Default::default()
    };
    let (model, _) = fit(&g, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    let back = load_checkpoint(&path).unwrap();

    let before = embed(&model, &g, &cfg).unwrap();
    let after = embed(&back, &g, &cfg).unwrap();
    println!("{} tensors, {bytes} bytes", back.named_tensors().len());
    for (name, t) in back.named_tensors() {
        println!("  {name:<32} {}x{}", t.n_rows(), t.n_cols());
    }
    println!("embeddings identical: {}", before == after);
}
