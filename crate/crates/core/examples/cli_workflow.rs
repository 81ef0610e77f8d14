//! Drives the command-line front end in-process: train, evaluate, embed.

use merit::cli::{run, CHECKPOINT_FILE, EFFECTIVE_CONFIG_FILE};
use merit::graph::io::save_dataset_dir;
use merit::synthetic::{stochastic_block_graph, SbmConfig};

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let data = save_dataset_dir(&stochastic_block_graph(&SbmConfig::default(), 2).unwrap(), &tmp.path().join("data")).unwrap();
    let out = tmp.path().join("run");
    let p = |x: &std::path::Path| x.to_str().unwrap().to_string();

    let train = ["merit", "train", "--data", &p(&data), "--out", &p(&out), "--epochs", "30", "--alpha", "0.15", "--quiet"];
    println!("$ {}", train[1..].join(" "));
    assert_eq!(run(train), 0);
    for entry in std::fs::read_dir(&out).unwrap() {
        println!("  {}", entry.unwrap().file_name().to_string_lossy());
    }

    let ckpt = p(&out.join(CHECKPOINT_FILE));
    let cfg = p(&out.join(EFFECTIVE_CONFIG_FILE));
    let eval = ["merit", "eval", "--checkpoint", &ckpt, "--data", &p(&data), "--config", &cfg, "--repeats", "3", "--dataset", "blocks", "--out", &p(&out)];
    println!("$ {}", eval[1..].join(" "));
    assert_eq!(run(eval), 0);

    let code = run(["merit", "train", "--data", &p(&tmp.path().join("missing")), "--out", &p(&out)]);
    println!("missing data directory exits with {code}");
}
