//! Command-line front end. [`run`] parses arguments, dispatches to a
//! subcommand and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | configuration error (unreadable or invalid config, bad flag value) |
//! | 2 | data error (missing or malformed input files, unwritable outputs) |
//! | 3 | numeric abort (non-finite loss, failed gradient check) |
//!
//! Every subcommand writes the fully resolved settings it ran with as JSON
//! into its output directory.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::augment::{
    full_diffusion, make_views, ppr_diffusion_exact, ppr_power_series, seeded_rng, PropagationOperator,
};
use crate::autodiff::{standard_suite, GRAD_TOL};
use crate::error::Error;
use crate::eval::{self, SplitSource};
use crate::graph::io::{load_dataset_dir, write_dense, write_edges};
use crate::graph::{Graph, SparseMatrix};
use crate::model::{load_checkpoint, write_atomic};
use crate::parallel::{init_thread_pool_from_env, set_fast_mode};
use crate::trainer::{embed, fit_with, prepare_graph, TrainConfig};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

#[derive(Debug, Parser)]
#[command(name = "merit", version, about = "Siamese graph contrastive representation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, log and embeddings.
    Train(TrainArgs),
    /// Fit linear probes on the embeddings of a checkpoint and report accuracy.
    Eval(EvalArgs),
    /// Write the inference embeddings of a checkpoint.
    Embed(EmbedArgs),
    /// Write the dense PPR diffusion matrix of a graph.
    Diffuse(DiffuseArgs),
    /// Draw one pair of training views and write them out.
    AugmentPreview(PreviewArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
}

/// Hyperparameter overrides. Repeating a flag keeps the last value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Random seed.
    #[arg(long, value_name = "N")]
    pub seed: Vec<u64>,
    /// Weight of the cross-view loss.
    #[arg(long, value_name = "X")]
    pub beta: Vec<f64>,
    /// Target-network momentum.
    #[arg(long, value_name = "X")]
    pub momentum: Vec<f64>,
    /// Edge modification ratio.
    #[arg(long, value_name = "X")]
    pub edge_mod_ratio: Vec<f64>,
    /// Feature masking ratio.
    #[arg(long, value_name = "X")]
    pub feature_mask_ratio: Vec<f64>,
    /// PPR teleport probability; 0 replaces diffusion by the normalized adjacency.
    #[arg(long, value_name = "X")]
    pub alpha: Vec<f64>,
    /// Number of training epochs.
    #[arg(long, value_name = "N")]
    pub epochs: Vec<usize>,
}

fn last<T: Clone + Display>(flag: &str, values: &[T], warnings: &mut Vec<String>) -> Option<T> {
    if values.len() > 1 {
        let all: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let w = format!(
            "warning: --{flag} given {} times ({}); using the last value",
            values.len(),
            all.join(", ")
        );
        eprintln!("{w}");
        warnings.push(w);
    }
    values.last().cloned()
}

impl Overrides {
    /// Applies the overrides on top of `cfg`; returns the duplicate-flag
    /// warnings that were printed.
    pub fn apply(&self, cfg: &mut TrainConfig) -> Vec<String> {
        let mut w = Vec::new();
        if let Some(v) = last("seed", &self.seed, &mut w) {
            cfg.seed = v;
        }
        if let Some(v) = last("beta", &self.beta, &mut w) {
            cfg.beta = v;
        }
        if let Some(v) = last("momentum", &self.momentum, &mut w) {
            cfg.momentum_m = v;
        }
        if let Some(v) = last("edge-mod-ratio", &self.edge_mod_ratio, &mut w) {
            cfg.augmentation.edge_mod_ratio = v;
        }
        if let Some(v) = last("feature-mask-ratio", &self.feature_mask_ratio, &mut w) {
            cfg.augmentation.feature_mask_ratio = v;
        }
        if let Some(v) = last("alpha", &self.alpha, &mut w) {
            cfg.augmentation.ppr_alpha = v;
        }
        if let Some(v) = last("epochs", &self.epochs, &mut w) {
            cfg.epochs = v;
        }
        w
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// JSON training config; defaults apply to absent keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dataset directory (edges.txt, features.txt, optional labels.txt and split.txt).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Config the checkpoint was trained with (preprocessing and readout).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Probe repeats, seeded `seed, seed+1, …`.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw this many train and validation nodes per class instead of using
    /// the dataset's split file.
    #[arg(long, value_name = "N")]
    pub per_class: Option<usize>,
    #[arg(long, default_value_t = eval::DEFAULT_L2)]
    pub l2: f64,
    #[arg(long, default_value_t = eval::DEFAULT_ITERS)]
    pub iters: usize,
    /// Name printed in the report line; defaults to the data directory name.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Directory for the effective-config record.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EmbedArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Embedding file to write; labels go next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiffuseMethod {
    Exact,
    PowerSeries,
}

#[derive(Debug, clap::Args)]
pub struct DiffuseArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = DiffuseMethod::Exact)]
    pub method: DiffuseMethod,
    #[arg(long, default_value_t = 1000)]
    pub terms: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Matrix file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct PreviewArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    #[arg(long, default_value_t = 6)]
    pub features: usize,
    #[arg(long, default_value_t = 4)]
    pub latent: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Directory for the effective-config record.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(e: impl Display) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn data_err(e: impl Display) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: e.to_string(),
    }
}

/// Maps errors raised while running (after inputs were loaded).
fn run_err(e: Error) -> CliError {
    let code = match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_json_file(p).map_err(config_err),
        None => Ok(TrainConfig::default()),
    }
}

fn load_data(dir: &Path) -> CliResult<Graph> {
    if !dir.is_dir() {
        return Err(data_err(format!("data directory {} does not exist", dir.display())));
    }
    load_dataset_dir(dir).map_err(data_err)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))
}

fn write_record(dir: &Path, file: &str, value: &serde_json::Value) -> CliResult<()> {
    ensure_dir(dir)?;
    let text = serde_json::to_string_pretty(value).expect("json value");
    write_atomic(&dir.join(file), text.as_bytes()).map_err(data_err)
}

fn record_name(command: &str) -> String {
    format!("{command}.{EFFECTIVE_CONFIG_FILE}")
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn resolved(cfg: TrainConfig, overrides: &Overrides) -> CliResult<TrainConfig> {
    let mut cfg = cfg;
    overrides.apply(&mut cfg);
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn run_train(a: &TrainArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let mut cfg = resolved(cfg, &a.overrides)?;
    let g = load_data(&a.data)?;
    ensure_dir(&a.out)?;
    cfg.log_path = Some(a.out.join(LOG_FILE));
    cfg.checkpoint_path = Some(a.out.join(CHECKPOINT_FILE));
    let text = cfg.to_json_pretty();
    write_atomic(&a.out.join(EFFECTIVE_CONFIG_FILE), text.as_bytes()).map_err(data_err)?;

    let quiet = a.quiet;
    let (model, _) = fit_with(&g, &cfg, |row| {
        if !quiet && (row.epoch == 1 || row.epoch % 10 == 0 || row.epoch == cfg.epochs) {
            let l = &row.losses;
            eprintln!(
                "epoch {:>4}  loss {:.6}  cn {:.6}  cv {:.6}  pos {:.4}  neg {:.4}",
                row.epoch, l.l_total, l.l_cn, l.l_cv, l.pos_sim, l.neg_sim
            );
        }
    })
    .map_err(run_err)?;

    let h = embed(&model, &g, &cfg).map_err(run_err)?;
    eval::export_embeddings(&h, &a.out.join(EMBEDDINGS_FILE), g.labels.as_deref()).map_err(data_err)?;
    Ok(())
}

fn run_eval(a: &EvalArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.repeats == 0 {
        return Err(config_err("--repeats must be at least 1"));
    }
    let g = load_data(&a.data)?;
    let model = load_checkpoint(&a.checkpoint).map_err(data_err)?;
    let labels = g
        .labels
        .clone()
        .ok_or_else(|| data_err(format!("{} has no labels.txt", a.data.display())))?;
    let splits = match (a.per_class, &g.splits) {
        (Some(k), _) => SplitSource::PerClass(k),
        (None, Some(s)) => SplitSource::Fixed(s.clone()),
        (None, None) => SplitSource::PerClass(30),
    };
    let dataset = a.dataset.clone().unwrap_or_else(|| {
        a.data
            .file_name()
            .map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
    });
    write_record(
        &a.out,
        &record_name("eval"),
        &json!({
            "command": "eval",
            "checkpoint": a.checkpoint,
            "data": a.data,
            "dataset": dataset,
            "repeats": a.repeats,
            "seed": a.seed,
            "splits": match &splits {
                SplitSource::Fixed(_) => "split_file".to_string(),
                SplitSource::PerClass(k) => format!("per_class_{k}"),
            },
            "l2": a.l2,
            "iters": a.iters,
            "config": cfg,
        }),
    )?;

    let h = embed(&model, &g, &cfg).map_err(run_err)?;
    let accs = eval::evaluate_embeddings(&h, &labels, &splits, a.repeats, a.seed, a.l2, a.iters).map_err(data_err)?;
    println!("{}", eval::report_line(&dataset, &eval::summarize(&accs)));
    Ok(())
}

fn run_embed(a: &EmbedArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let g = load_data(&a.data)?;
    let model = load_checkpoint(&a.checkpoint).map_err(data_err)?;
    write_record(
        &parent_dir(&a.out),
        &record_name("embed"),
        &json!({"command": "embed", "checkpoint": a.checkpoint, "data": a.data, "out": a.out, "config": cfg}),
    )?;
    let h = embed(&model, &g, &cfg).map_err(run_err)?;
    eval::export_embeddings(&h, &a.out, g.labels.as_deref()).map_err(data_err)
}

fn run_diffuse(a: &DiffuseArgs) -> CliResult<()> {
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(config_err(format!("--alpha {} must lie in (0, 1]", a.alpha)));
    }
    let g = load_data(&a.data)?;
    write_record(
        &parent_dir(&a.out),
        &record_name("diffuse"),
        &json!({
            "command": "diffuse",
            "data": a.data,
            "alpha": a.alpha,
            "method": format!("{:?}", a.method).to_lowercase(),
            "terms": a.terms,
            "tol": a.tol,
            "out": a.out,
        }),
    )?;
    let s = match a.method {
        DiffuseMethod::Exact => ppr_diffusion_exact(&g.adjacency, a.alpha),
        DiffuseMethod::PowerSeries => ppr_power_series(&g.adjacency, a.alpha, a.terms, a.tol),
    }
    .map_err(run_err)?;
    write_dense(&a.out, &s).map_err(data_err)
}

fn run_preview(a: &PreviewArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let cfg = resolved(cfg, &a.overrides)?;
    let g = prepare_graph(&load_data(&a.data)?, &cfg);
    write_record(
        &a.out,
        &record_name("augment-preview"),
        &json!({"command": "augment-preview", "data": a.data, "config": cfg}),
    )?;
    let s_full = full_diffusion(&g, &cfg.augmentation).map_err(run_err)?;
    let mut rng = seeded_rng(cfg.seed);
    let (v1, v2) = make_views(&g, &s_full, &cfg.augmentation, &mut rng).map_err(run_err)?;

    let w = |name: &str| a.out.join(name);
    write_dense(&w("view1_features.txt"), &v1.features).map_err(data_err)?;
    write_dense(&w("view2_features.txt"), &v2.features).map_err(data_err)?;
    let op1 = match &v1.operator {
        PropagationOperator::Sparse(s) => s.clone(),
        PropagationOperator::Dense(d) => SparseMatrix::from_dense(d),
    };
    write_dense(&w("view2_operator.txt"), &v2.operator.to_dense()).map_err(data_err)?;
    let map: String = v1.node_map.iter().map(|i| format!("{i}\n")).collect();
    write_atomic(&w("node_map.txt"), map.as_bytes()).map_err(data_err)?;

    // recover the modified edge set from the normalized operator's pattern
    let edges = SparseMatrix::from_triplets(
        op1.n_rows(),
        op1.n_cols(),
        op1.iter().filter(|&(i, j, _)| i != j).map(|(i, j, _)| (i, j, 1.0)),
    )
    .map_err(run_err)?;
    write_edges(&w("view1_edges.txt"), &edges).map_err(data_err)?;

    let crop = g
        .adjacency
        .principal_submatrix(v1.node_map[0], v1.num_nodes())
        .map_err(run_err)?;
    let masked = |x: &crate::graph::DenseMatrix| (0..x.n_cols()).filter(|&c| x.rows().all(|r| r[c] == 0.0)).count();
    println!("nodes\t{}\t(of {})", v1.num_nodes(), g.num_nodes());
    println!("window\t{}..{}", v1.node_map[0], v1.node_map[0] + v1.num_nodes());
    println!("edges\t{}\t->\t{}", crop.undirected_edge_count(), edges.undirected_edge_count());
    println!("zero_columns\tview1 {}\tview2 {}", masked(&v1.features), masked(&v2.features));
    Ok(())
}

fn run_grad_check(a: &GradCheckArgs) -> CliResult<()> {
    if a.nodes < 2 || a.features == 0 || a.latent == 0 || !(a.eps > 0.0) {
        return Err(config_err("grad-check needs --nodes >= 2, positive --features, --latent and --eps"));
    }
    write_record(
        &a.out,
        &record_name("grad-check"),
        &json!({
            "command": "grad-check",
            "seed": a.seed,
            "nodes": a.nodes,
            "features": a.features,
            "latent": a.latent,
            "eps": a.eps,
            "tolerance": GRAD_TOL,
        }),
    )?;
    let results = standard_suite(a.seed, a.nodes, a.features, a.latent, a.eps).map_err(run_err)?;
    let mut failed = 0;
    for (name, r) in &results {
        let ok = r.max_rel_error < GRAD_TOL;
        failed += usize::from(!ok);
        println!("{name}\t{:.3e}\t{}", r.max_rel_error, if ok { "ok" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(CliError {
            code: EXIT_NUMERIC,
            message: format!("{failed} gradient checks exceeded {GRAD_TOL:e}"),
        });
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    init_thread_pool_from_env();
    set_fast_mode(false);
    let res = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Embed(a) => run_embed(a),
        Command::Diffuse(a) => run_diffuse(a),
        Command::AugmentPreview(a) => run_preview(a),
        Command::GradCheck(a) => run_grad_check(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
