//! Training loop: one pair of augmented views per epoch, both networks on
//! both views, backward through the online branch, optimizer step, then the
//! moving-average update of the target branch.

mod optim;

pub use optim::{adam_step, sgd_step, AdamParams, OptimizerState};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{full_diffusion, make_views, seeded_rng, AugmentationConfig, MeritRng};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, Graph};
use crate::losses::{merit_objective, similarity_stats, LossBreakdown};
use crate::model::{save_checkpoint, MeritModel, Readout};
use crate::parallel::set_fast_mode;

pub const TRAIN_LOG_HEADER: &str = "epoch\tl_total\tl_cn\tl_cv\tpos_sim\tneg_sim\tseconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `learning_rate` to 0 over `epochs`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the cross-view term; `1 − beta` goes to the cross-network term.
    pub beta: f64,
    pub momentum_m: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub augmentation: AugmentationConfig,
    pub optimizer: OptimizerKind,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub log_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Similarities are divided by this before exponentiation.
    pub temperature: f64,
    /// Read embeddings out after the projector and predictor instead of
    /// straight from the encoder.
    pub embed_through_projector: bool,
    /// Serial kernels and a zero `seconds` column, so equal seeds give
    /// byte-identical logs and checkpoints.
    pub deterministic: bool,
    /// L1-normalize every feature row before training and inference.
    pub row_normalize_features: bool,
    pub lr_schedule: LrSchedule,
    /// Stop when `l_total` has not improved for this many epochs.
    pub early_stopping_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            momentum_m: 0.8,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
            epochs: 500,
            latent_dim: 512,
            seed: 0,
            augmentation: AugmentationConfig::default(),
            optimizer: OptimizerKind::Adam,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            log_path: None,
            checkpoint_path: None,
            temperature: 1.0,
            embed_through_projector: false,
            deterministic: true,
            row_normalize_features: true,
            lr_schedule: LrSchedule::Constant,
            early_stopping_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("beta", self.beta), ("momentum_m", self.momentum_m)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} not in [0, 1]"));
            }
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("weight_decay", self.weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("adam_betas ({b1}, {b2}) must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad(format!("adam_eps = {} must be positive", self.adam_eps));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature = {} must be positive", self.temperature));
        }
        if self.early_stopping_patience == Some(0) {
            return bad("early_stopping_patience must be at least 1".into());
        }
        self.augmentation.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn readout(&self) -> Readout {
        if self.embed_through_projector {
            Readout::ThroughProjector
        } else {
            Readout::Encoder
        }
    }

    /// Learning rate used for the step after `completed` steps.
    pub fn lr_at(&self, completed: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = (completed as f64 / self.epochs as f64).min(1.0);
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub seconds: f64,
}

impl EpochLog {
    pub fn tsv_line(&self) -> String {
        let l = &self.losses;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, l.l_total, l.l_cn, l.l_cv, l.pos_sim, l.neg_sim, self.seconds
        )
    }
}

/// Applies the configured feature preprocessing.
pub fn prepare_graph(g: &Graph, cfg: &TrainConfig) -> Graph {
    let mut g = g.clone();
    if cfg.row_normalize_features {
        g.row_normalize_features();
    }
    g
}

/// One optimization step; returns the losses evaluated before the update.
///
/// `pos_sim`/`neg_sim` are the mean cosine similarities between the online
/// predictions of view 1 and the target projections of view 2.
pub fn train_step(
    model: &mut MeritModel,
    g: &Graph,
    s_full: &DenseMatrix,
    cfg: &TrainConfig,
    rng: &mut MeritRng,
    opt: &mut OptimizerState,
) -> Result<LossBreakdown> {
    let epoch = opt.step as usize + 1;
    let (v1, v2) = make_views(g, s_full, &cfg.augmentation, rng)?;

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (_, h1) = model.online_forward(&mut tape, &bound, &v1, true)?;
    let (_, h2) = model.online_forward(&mut tape, &bound, &v2, true)?;
    let z1_hat = model.target_forward(&mut tape, &bound, &v1)?;
    let z2_hat = model.target_forward(&mut tape, &bound, &v2)?;
    let obj = merit_objective(&mut tape, h1, h2, z1_hat, z2_hat, cfg.beta, cfg.temperature)?;

    let (pos_sim, neg_sim) = similarity_stats(tape.value(h1), tape.value(z2_hat));
    let losses = LossBreakdown {
        l_cn: tape.scalar(obj.l_cn),
        l_cv: tape.scalar(obj.l_cv),
        l_total: tape.scalar(obj.total),
        pos_sim,
        neg_sim,
    };
    if !losses.l_total.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            detail: format!(
                "l_total={} l_cn={} l_cv={} pos_sim={} neg_sim={}",
                losses.l_total, losses.l_cn, losses.l_cv, pos_sim, neg_sim
            ),
        });
    }

    tape.backward(obj.total)?;
    if !model.target_untouched(&tape, &bound) {
        return Err(Error::Autodiff("gradient reached the target network".into()));
    }
    let grads = model.online_grads(&tape, &bound);
    drop(tape);
    let bad: Vec<String> = model
        .online_params()
        .into_iter()
        .zip(&grads)
        .filter(|(_, g)| !g.is_finite())
        .map(|((name, _), _)| name)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonFinite {
            epoch,
            detail: format!("l_total={} with non-finite gradients in {}", losses.l_total, bad.join(", ")),
        });
    }

    let lr = cfg.lr_at(opt.step);
    let mut params = model.online_params_mut();
    match cfg.optimizer {
        OptimizerKind::Adam => adam_step(
            &mut params,
            &grads,
            opt,
            AdamParams {
                lr,
                beta1: cfg.adam_betas.0,
                beta2: cfg.adam_betas.1,
                eps: cfg.adam_eps,
                weight_decay: cfg.weight_decay,
            },
        )?,
        OptimizerKind::Sgd => {
            sgd_step(&mut params, &grads, lr, cfg.weight_decay)?;
            opt.step += 1;
        }
    }
    model.momentum_update();
    Ok(losses)
}

/// Model and optimizer state as initialized from `cfg.seed`, together with
/// the random stream the training steps continue from.
pub fn init_training(g: &Graph, cfg: &TrainConfig) -> Result<(MeritModel, OptimizerState, MeritRng)> {
    let mut rng = seeded_rng(cfg.seed);
    let model = MeritModel::new(g.num_features(), cfg.latent_dim, cfg.momentum_m, &mut rng)?;
    let opt = OptimizerState::new(model.online_params().into_iter().map(|(_, p)| p));
    Ok((model, opt, rng))
}

struct LogFile {
    path: PathBuf,
    w: BufWriter<fs::File>,
}

impl LogFile {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self {
            path: path.to_path_buf(),
            w: BufWriter::new(f),
        };
        log.line(TRAIN_LOG_HEADER)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}")
            .and_then(|_| self.w.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// [`fit_with`] without a progress callback.
pub fn fit(g: &Graph, cfg: &TrainConfig) -> Result<(MeritModel, Vec<EpochLog>)> {
    fit_with(g, cfg, |_| {})
}

/// Trains from scratch for `cfg.epochs` epochs (or until early stopping),
/// writing the log and final checkpoint when their paths are set.
pub fn fit_with(
    g: &Graph,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(MeritModel, Vec<EpochLog>)> {
    cfg.validate()?;
    set_fast_mode(!cfg.deterministic);
    let g = prepare_graph(g, cfg);
    let s_full = full_diffusion(&g, &cfg.augmentation)?;
    let (mut model, mut opt, mut rng) = init_training(&g, cfg)?;
    let mut log_file = cfg.log_path.as_deref().map(LogFile::create).transpose()?;

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let losses = train_step(&mut model, &g, &s_full, cfg, &mut rng, &mut opt)?;
        let seconds = if cfg.deterministic { 0.0 } else { t0.elapsed().as_secs_f64() };
        let row = EpochLog { epoch, losses, seconds };
        if let Some(f) = log_file.as_mut() {
            f.line(&row.tsv_line())?;
        }
        on_epoch(&row);
        logs.push(row);

        if let Some(patience) = cfg.early_stopping_patience {
            if losses.l_total < best {
                best = losses.l_total;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(&model, path)?;
    }
    Ok((model, logs))
}

/// Inference embeddings of a trained model under the preprocessing and
/// readout of `cfg`.
pub fn embed(model: &MeritModel, g: &Graph, cfg: &TrainConfig) -> Result<DenseMatrix> {
    let g = prepare_graph(g, cfg);
    let s = full_diffusion(&g, &cfg.augmentation)?;
    model.infer_embeddings(&g, &s, cfg.readout())
}
