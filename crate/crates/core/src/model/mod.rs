//! Siamese network: an online branch (encoder, projector, predictor)
//! trained by gradients and a target branch (encoder, projector) that only
//! moves by exponential moving average of the online weights.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub(crate) use checkpoint::write_atomic;

use rand::Rng;

use crate::augment::{GraphView, PropagationOperator};
use crate::autodiff::{BnStats, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{symmetric_normalize, DenseMatrix, Graph};

pub const DEFAULT_LATENT_DIM: usize = 512;
pub const PRELU_INIT: f64 = 0.25;

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit))
}

/// One-layer GCN: `PReLU(Â · X · W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    pub weight: DenseMatrix,
    /// `1×1`
    pub prelu_slope: DenseMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderHandles {
    weight: Tensor,
    slope: Tensor,
}

impl GcnEncoder {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(in_dim, out_dim, rng),
            prelu_slope: DenseMatrix::filled(1, 1, PRELU_INIT),
        }
    }

    pub fn bind(&self, tape: &mut Tape<'_>, trainable: bool) -> EncoderHandles {
        let mk = |t: &mut Tape<'_>, v: &DenseMatrix| {
            if trainable {
                t.param(v.clone())
            } else {
                t.constant(v.clone())
            }
        };
        EncoderHandles {
            weight: mk(tape, &self.weight),
            slope: mk(tape, &self.prelu_slope),
        }
    }

    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        h: &EncoderHandles,
        features: &'a DenseMatrix,
        operator: &'a PropagationOperator,
    ) -> Result<Tensor> {
        if features.n_cols() != self.weight.n_rows() {
            return Err(Error::dim(
                "encode",
                format!("{} feature columns, encoder expects {}", features.n_cols(), self.weight.n_rows()),
            ));
        }
        let xw = tape.dense_const_matmul(features, h.weight)?;
        let propagated = match operator {
            PropagationOperator::Sparse(s) => tape.spmm_const(s, xw)?,
            PropagationOperator::Dense(d) => tape.dense_const_matmul(d, xw)?,
        };
        tape.prelu(propagated, h.slope)
    }

    fn params(&self) -> [(&'static str, &DenseMatrix); 2] {
        [("weight", &self.weight), ("prelu_slope", &self.prelu_slope)]
    }

    fn params_mut(&mut self) -> [&mut DenseMatrix; 2] {
        [&mut self.weight, &mut self.prelu_slope]
    }
}

/// `Linear → BatchNorm → PReLU → Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub bn_scale: DenseMatrix,
    pub bn_shift: DenseMatrix,
    pub bn_stats: BnStats,
    pub prelu_slope: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadHandles {
    w1: Tensor,
    b1: Tensor,
    bn_scale: Tensor,
    bn_shift: Tensor,
    slope: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl MlpHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let w1 = glorot(dim, dim, rng);
        let w2 = glorot(dim, dim, rng);
        Self {
            w1,
            b1: DenseMatrix::zeros(1, dim),
            bn_scale: DenseMatrix::filled(1, dim, 1.0),
            bn_shift: DenseMatrix::zeros(1, dim),
            bn_stats: BnStats::new(dim),
            prelu_slope: DenseMatrix::filled(1, 1, PRELU_INIT),
            w2,
            b2: DenseMatrix::zeros(1, dim),
        }
    }

    pub fn bind(&self, tape: &mut Tape<'_>, trainable: bool) -> HeadHandles {
        let mut mk = |v: &DenseMatrix| {
            if trainable {
                tape.param(v.clone())
            } else {
                tape.constant(v.clone())
            }
        };
        HeadHandles {
            w1: mk(&self.w1),
            b1: mk(&self.b1),
            bn_scale: mk(&self.bn_scale),
            bn_shift: mk(&self.bn_shift),
            slope: mk(&self.prelu_slope),
            w2: mk(&self.w2),
            b2: mk(&self.b2),
        }
    }

    /// In training mode the batch statistics are folded into `bn_stats`.
    pub fn forward(&mut self, tape: &mut Tape<'_>, h: &HeadHandles, x: Tensor, training: bool) -> Result<Tensor> {
        let a = tape.matmul(x, h.w1)?;
        let a = tape.add_row_bias(a, h.b1)?;
        let a = tape.batchnorm_rows(a, h.bn_scale, h.bn_shift, &mut self.bn_stats, training)?;
        let a = tape.prelu(a, h.slope)?;
        let a = tape.matmul(a, h.w2)?;
        tape.add_row_bias(a, h.b2)
    }

    fn params(&self) -> [(&'static str, &DenseMatrix); 7] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("bn_scale", &self.bn_scale),
            ("bn_shift", &self.bn_shift),
            ("prelu_slope", &self.prelu_slope),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    fn params_mut(&mut self) -> [&mut DenseMatrix; 7] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.bn_scale,
            &mut self.bn_shift,
            &mut self.prelu_slope,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineNetwork {
    pub encoder: GcnEncoder,
    pub projector: MlpHead,
    pub predictor: MlpHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork {
    pub encoder: GcnEncoder,
    pub projector: MlpHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeritModel {
    pub online: OnlineNetwork,
    pub target: TargetNetwork,
    pub momentum: f64,
}

/// Tape handles of every parameter of one step.
#[derive(Debug, Clone, Copy)]
pub struct BoundModel {
    online_encoder: EncoderHandles,
    online_projector: HeadHandles,
    predictor: HeadHandles,
    target_encoder: EncoderHandles,
    target_projector: HeadHandles,
}

impl BoundModel {
    fn online_tensors(&self) -> Vec<Tensor> {
        let e = &self.online_encoder;
        let mut v = vec![e.weight, e.slope];
        for h in [&self.online_projector, &self.predictor] {
            v.extend([h.w1, h.b1, h.bn_scale, h.bn_shift, h.slope, h.w2, h.b2]);
        }
        v
    }

    fn target_tensors(&self) -> Vec<Tensor> {
        let e = &self.target_encoder;
        let h = &self.target_projector;
        vec![e.weight, e.slope, h.w1, h.b1, h.bn_scale, h.bn_shift, h.slope, h.w2, h.b2]
    }
}

/// How inference embeddings are read out of the online network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// Raw encoder outputs.
    #[default]
    Encoder,
    /// Encoder, projector and predictor (eval-mode batch norm).
    ThroughProjector,
}

impl MeritModel {
    /// Glorot-uniform weights, zero biases, unit BN scale; the target
    /// network starts as an exact copy of the online one.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, latent_dim: usize, momentum: f64, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || latent_dim == 0 {
            return Err(Error::InvalidParameter("model dimensions must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::InvalidParameter(format!("momentum {momentum} not in [0, 1]")));
        }
        let encoder = GcnEncoder::new(in_dim, latent_dim, rng);
        let projector = MlpHead::new(latent_dim, rng);
        let predictor = MlpHead::new(latent_dim, rng);
        let target = TargetNetwork {
            encoder: encoder.clone(),
            projector: projector.clone(),
        };
        Ok(Self {
            online: OnlineNetwork {
                encoder,
                projector,
                predictor,
            },
            target,
            momentum,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.online.encoder.weight.n_rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.online.encoder.weight.n_cols()
    }

    /// Registers every parameter on `tape`. Target parameters are
    /// registered as trainable leaves too, so that a backward pass can
    /// prove no gradient reaches them.
    pub fn bind(&self, tape: &mut Tape<'_>) -> BoundModel {
        BoundModel {
            online_encoder: self.online.encoder.bind(tape, true),
            online_projector: self.online.projector.bind(tape, true),
            predictor: self.online.predictor.bind(tape, true),
            target_encoder: self.target.encoder.bind(tape, true),
            target_projector: self.target.projector.bind(tape, true),
        }
    }

    /// `Z = p_θ(g_θ(view))`, `H = q_θ(Z)`.
    pub fn online_forward<'a>(
        &mut self,
        tape: &mut Tape<'a>,
        b: &BoundModel,
        view: &'a GraphView,
        training: bool,
    ) -> Result<(Tensor, Tensor)> {
        let e = self
            .online
            .encoder
            .forward(tape, &b.online_encoder, &view.features, &view.operator)?;
        let z = self.online.projector.forward(tape, &b.online_projector, e, training)?;
        let h = self.online.predictor.forward(tape, &b.predictor, z, training)?;
        Ok((z, h))
    }

    /// `Ẑ = stopgrad(p_ζ(g_ζ(view)))`, batch norm in training mode.
    pub fn target_forward<'a>(&mut self, tape: &mut Tape<'a>, b: &BoundModel, view: &'a GraphView) -> Result<Tensor> {
        let e = self
            .target
            .encoder
            .forward(tape, &b.target_encoder, &view.features, &view.operator)?;
        let z = self.target.projector.forward(tape, &b.target_projector, e, true)?;
        Ok(tape.detach(z))
    }

    /// Online parameters in a fixed order (encoder, projector, predictor).
    pub fn online_params(&self) -> Vec<(String, &DenseMatrix)> {
        let o = &self.online;
        let mut v: Vec<(String, &DenseMatrix)> = o
            .encoder
            .params()
            .into_iter()
            .map(|(n, p)| (format!("online.encoder.{n}"), p))
            .collect();
        v.extend(o.projector.params().into_iter().map(|(n, p)| (format!("online.projector.{n}"), p)));
        v.extend(o.predictor.params().into_iter().map(|(n, p)| (format!("online.predictor.{n}"), p)));
        v
    }

    pub fn online_params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let o = &mut self.online;
        let mut v: Vec<&mut DenseMatrix> = o.encoder.params_mut().into_iter().collect();
        v.extend(o.projector.params_mut());
        v.extend(o.predictor.params_mut());
        v
    }

    /// Target parameters in a fixed order (encoder, projector).
    pub fn target_params(&self) -> Vec<(String, &DenseMatrix)> {
        let t = &self.target;
        let mut v: Vec<(String, &DenseMatrix)> = t
            .encoder
            .params()
            .into_iter()
            .map(|(n, p)| (format!("target.encoder.{n}"), p))
            .collect();
        v.extend(t.projector.params().into_iter().map(|(n, p)| (format!("target.projector.{n}"), p)));
        v
    }

    /// Gradients of the online parameters after `tape.backward`, in
    /// [`online_params`](Self::online_params) order.
    pub fn online_grads(&self, tape: &Tape<'_>, b: &BoundModel) -> Vec<DenseMatrix> {
        b.online_tensors().into_iter().map(|t| tape.grad(t)).collect()
    }

    /// Gradients that reached the target parameters (all zero by
    /// construction), in [`target_params`](Self::target_params) order.
    pub fn target_grads(&self, tape: &Tape<'_>, b: &BoundModel) -> Vec<DenseMatrix> {
        b.target_tensors().into_iter().map(|t| tape.grad(t)).collect()
    }

    /// True when no backward pass has written any gradient buffer for a
    /// target parameter.
    pub fn target_untouched(&self, tape: &Tape<'_>, b: &BoundModel) -> bool {
        b.target_tensors().into_iter().all(|t| !tape.has_grad(t))
    }

    /// `ζ ← m·ζ + (1−m)·θ` for every target parameter. Batch-norm running
    /// statistics are left alone.
    pub fn momentum_update(&mut self) {
        let m = self.momentum;
        let online: Vec<&DenseMatrix> = {
            let o = &self.online;
            o.encoder
                .params()
                .into_iter()
                .chain(o.projector.params())
                .map(|(_, p)| p)
                .collect()
        };
        let t = &mut self.target;
        let targets = t.encoder.params_mut().into_iter().chain(t.projector.params_mut());
        for (z, th) in targets.zip(online) {
            for (zv, &tv) in z.values_mut().iter_mut().zip(th.values()) {
                *zv = m * *zv + (1.0 - m) * tv;
            }
        }
    }

    /// Online encoder output for arbitrary features and operator.
    pub fn encode(&self, features: &DenseMatrix, operator: &PropagationOperator) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let h = self.online.encoder.bind(&mut tape, false);
        let out = self.online.encoder.forward(&mut tape, &h, features, operator)?;
        Ok(tape.value(out).clone())
    }

    /// Embeddings for downstream tasks: the online encoder applied to the
    /// normalized adjacency view plus the same encoder applied to the
    /// diffusion view, summed.
    pub fn infer_embeddings(&self, g: &Graph, s: &DenseMatrix, readout: Readout) -> Result<DenseMatrix> {
        let n = g.num_nodes();
        if s.shape() != (n, n) {
            return Err(Error::dim("infer_embeddings", format!("diffusion {:?} for {n} nodes", s.shape())));
        }
        let adj = PropagationOperator::Sparse(symmetric_normalize(&g.adjacency, true)?);
        let diff = PropagationOperator::Dense(s.clone());
        let h1 = self.readout(&g.features, &adj, readout)?;
        let h2 = self.readout(&g.features, &diff, readout)?;
        h1.add(&h2)
    }

    fn readout(&self, x: &DenseMatrix, op: &PropagationOperator, readout: Readout) -> Result<DenseMatrix> {
        match readout {
            Readout::Encoder => self.encode(x, op),
            Readout::ThroughProjector => {
                let mut tape = Tape::new();
                let e = self.online.encoder.bind(&mut tape, false);
                let out = self.online.encoder.forward(&mut tape, &e, x, op)?;
                let mut proj = self.online.projector.clone();
                let mut pred = self.online.predictor.clone();
                let ph = proj.bind(&mut tape, false);
                let qh = pred.bind(&mut tape, false);
                let z = proj.forward(&mut tape, &ph, out, false)?;
                let h = pred.forward(&mut tape, &qh, z, false)?;
                Ok(tape.value(h).clone())
            }
        }
    }

    /// Every stored tensor with its checkpoint name.
    pub fn named_tensors(&self) -> Vec<(String, DenseMatrix)> {
        let mut v: Vec<(String, DenseMatrix)> = self
            .online_params()
            .into_iter()
            .chain(self.target_params())
            .map(|(n, p)| (n, p.clone()))
            .collect();
        for (prefix, head) in [
            ("online.projector", &self.online.projector),
            ("online.predictor", &self.online.predictor),
            ("target.projector", &self.target.projector),
        ] {
            let d = head.bn_stats.mean.len();
            v.push((format!("{prefix}.bn_running_mean"), DenseMatrix::from_raw(1, d, head.bn_stats.mean.clone())));
            v.push((format!("{prefix}.bn_running_var"), DenseMatrix::from_raw(1, d, head.bn_stats.var.clone())));
        }
        v.push(("momentum".into(), DenseMatrix::filled(1, 1, self.momentum)));
        v
    }
}
