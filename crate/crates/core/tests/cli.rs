use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use merit::cli::{CHECKPOINT_FILE, EFFECTIVE_CONFIG_FILE, EMBEDDINGS_FILE, LOG_FILE};
use merit::graph::io::{save_dataset_dir, write_dense};
use merit::synthetic::{stochastic_block_graph, SbmConfig};
use merit::trainer::{TrainConfig, TRAIN_LOG_HEADER};
use merit::DenseMatrix;
use tempfile::TempDir;

fn merit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merit"))
        .args(args)
        .env("MERIT_THREADS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let g = stochastic_block_graph(
            &SbmConfig {
                block_sizes: vec![15, 15],
                p_in: 0.3,
                p_out: 0.02,
                feature_dim: 12,
                informative_dims: 4,
                signal: 0.5,
                noise: 1.0,
                train_per_class: 3,
            },
            1,
        )
        .unwrap();
        save_dataset_dir(&g, &dir.path().join("data")).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            latent_dim: 8,
            ..Default::default()
        };
        fs::write(dir.path().join("config.json"), cfg.to_json_pretty()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (c, d, o) = (self.path("config.json"), self.path("data"), self.path(out));
        let mut args = vec!["train", "--config", s(&c), "--data", s(&d), "--out", s(&o), "--quiet"];
        args.extend_from_slice(extra);
        merit(&args)
    }
}

#[test]
fn train_writes_every_artifact() {
    let f = Fixture::new();
    let o = f.train("run", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = f.path("run");
    for name in [CHECKPOINT_FILE, LOG_FILE, EMBEDDINGS_FILE, EFFECTIVE_CONFIG_FILE, "embeddings.labels"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let log = fs::read_to_string(out.join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().next().unwrap(), TRAIN_LOG_HEADER);
    assert_eq!(log.lines().count(), 4);
    let eff = TrainConfig::from_json_file(&out.join(EFFECTIVE_CONFIG_FILE)).unwrap();
    assert_eq!(eff.epochs, 3);
    assert_eq!(eff.checkpoint_path.as_deref(), Some(out.join(CHECKPOINT_FILE).as_path()));
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn overrides_reach_the_effective_config() {
    let f = Fixture::new();
    let o = f.train(
        "run",
        &["--seed", "7", "--beta", "0.3", "--momentum", "0.95", "--edge-mod-ratio", "0.1", "--feature-mask-ratio", "0.4", "--alpha", "0.2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eff = TrainConfig::from_json_file(&f.path("run").join(EFFECTIVE_CONFIG_FILE)).unwrap();
    assert_eq!(eff.seed, 7);
    assert_eq!(eff.beta, 0.3);
    assert_eq!(eff.momentum_m, 0.95);
    assert_eq!(eff.augmentation.edge_mod_ratio, 0.1);
    assert_eq!(eff.augmentation.feature_mask_ratio, 0.4);
    assert_eq!(eff.augmentation.ppr_alpha, 0.2);
}

#[test]
fn repeated_flag_keeps_last_value_and_warns() {
    let f = Fixture::new();
    let o = f.train("run", &["--beta", "0.1", "--beta", "0.9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: --beta given 2 times"), "{}", stderr(&o));
    let eff = TrainConfig::from_json_file(&f.path("run").join(EFFECTIVE_CONFIG_FILE)).unwrap();
    assert_eq!(eff.beta, 0.9);
}

#[test]
fn seed_changes_outputs_and_equal_seeds_agree() {
    let f = Fixture::new();
    for (out, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        assert_eq!(code(&f.train(out, &["--seed", seed])), 0);
    }
    let read = |d: &str| fs::read(f.path(d).join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let log = |d: &str| fs::read_to_string(f.path(d).join(LOG_FILE)).unwrap();
    assert_eq!(log("a"), log("b"));
}

#[test]
fn missing_config_is_a_config_error_naming_the_file() {
    let f = Fixture::new();
    let missing = f.path("nope.json");
    let d = f.path("data");
    let o = merit(&["train", "--config", s(&missing), "--data", s(&d), "--out", s(&f.path("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.json"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let f = Fixture::new();
    let c = f.path("bad.json");
    fs::write(&c, r#"{"epochs": 2, "learning_rat": 0.1}"#).unwrap();
    let o = merit(&["train", "--config", s(&c), "--data", s(&f.path("data")), "--out", s(&f.path("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learning_rat"), "{}", stderr(&o));
}

#[test]
fn invalid_flag_value_is_a_config_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("x", &["--beta", "1.5"])), 1);
    assert_eq!(code(&f.train("x", &["--beta", "abc"])), 1);
}

#[test]
fn missing_or_malformed_data_is_a_data_error() {
    let f = Fixture::new();
    let o = merit(&["train", "--config", s(&f.path("config.json")), "--data", s(&f.path("absent")), "--out", s(&f.path("x"))]);
    assert_eq!(code(&o), 2);

    let bad = f.path("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("features.txt"), "1 2\n3\n").unwrap();
    fs::write(bad.join("edges.txt"), "0 1\n").unwrap();
    let o = merit(&["train", "--config", s(&f.path("config.json")), "--data", s(&bad), "--out", s(&f.path("x"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn overflowing_features_abort_with_numeric_code() {
    let f = Fixture::new();
    let data = f.path("data");
    write_dense(&data.join("features.txt"), &DenseMatrix::filled(30, 12, 1.7e308)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        latent_dim: 8,
        row_normalize_features: false,
        ..Default::default()
    };
    fs::write(f.path("config.json"), cfg.to_json_pretty()).unwrap();
    let o = f.train("run", &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch 1"), "{}", stderr(&o));
}

#[test]
fn eval_embed_round_trip() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("run", &[])), 0);
    let ckpt = f.path("run").join(CHECKPOINT_FILE);
    let cfg = f.path("run").join(EFFECTIVE_CONFIG_FILE);
    let data = f.path("data");
    let out = f.path("ev");
    let args = ["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--config", s(&cfg), "--repeats", "1", "--dataset", "toy", "--out", s(&out)];
    let a = merit(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let line = stdout(&a);
    let fields: Vec<&str> = line.trim().split('\t').collect();
    assert_eq!(fields[0], "toy");
    assert_eq!(fields[2], "0.0000");
    let acc: f64 = fields[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(stdout(&merit(&args)), line);
    assert!(out.join("eval.effective_config.json").is_file());

    let per_class = merit(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--config", s(&cfg), "--repeats", "3", "--per-class", "2", "--out", s(&out)]);
    assert_eq!(code(&per_class), 0, "{}", stderr(&per_class));

    let emb = f.path("emb/h.txt");
    let e = merit(&["embed", "--checkpoint", s(&ckpt), "--data", s(&data), "--config", s(&cfg), "--out", s(&emb)]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    assert_eq!(fs::read(&emb).unwrap(), fs::read(f.path("run").join(EMBEDDINGS_FILE)).unwrap());
    assert!(f.path("emb/embed.effective_config.json").is_file());
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let f = Fixture::new();
    let ckpt = f.path("junk.ckpt");
    fs::write(&ckpt, b"MERIT1\x05").unwrap();
    let o = merit(&["embed", "--checkpoint", s(&ckpt), "--data", s(&f.path("data")), "--out", s(&f.path("h.txt"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diffuse_methods_agree() {
    let f = Fixture::new();
    let data = f.path("data");
    let (a, b) = (f.path("d/exact.txt"), f.path("d/series.txt"));
    assert_eq!(code(&merit(&["diffuse", "--data", s(&data), "--alpha", "0.3", "--out", s(&a)])), 0);
    let o = merit(&["diffuse", "--data", s(&data), "--alpha", "0.3", "--method", "power-series", "--out", s(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let read = |p: &Path| merit::graph::io::read_dense(p).unwrap();
    assert!(read(&a).max_abs_diff(&read(&b)) < 1e-9);
    assert!(f.path("d/diffuse.effective_config.json").is_file());
    assert_eq!(code(&merit(&["diffuse", "--data", s(&data), "--alpha", "0", "--out", s(&a)])), 1);
}

#[test]
fn augment_preview_writes_views() {
    let f = Fixture::new();
    let out = f.path("prev");
    let o = merit(&["augment-preview", "--data", s(&f.path("data")), "--seed", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["view1_features.txt", "view2_features.txt", "view1_edges.txt", "view2_operator.txt", "node_map.txt", "augment-preview.effective_config.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let text = stdout(&o);
    let edges = text.lines().find(|l| l.starts_with("edges")).unwrap();
    let f: Vec<&str> = edges.split('\t').collect();
    assert_eq!(f[1], f[3]);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = merit(&["grad-check", "--seed", "5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().count() > 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn bad_usage_is_a_config_error() {
    assert_eq!(code(&merit(&["train"])), 1);
    assert_eq!(code(&merit(&["frobnicate"])), 1);
    assert_eq!(code(&merit(&["--help"])), 0);
}
