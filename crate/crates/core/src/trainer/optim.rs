use crate::error::{Error, Result};
use crate::graph::DenseMatrix;

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<'p>(params: impl IntoIterator<Item = &'p DenseMatrix>) -> Self {
        let first_moment: Vec<DenseMatrix> = params
            .into_iter()
            .map(|p| DenseMatrix::zeros(p.n_rows(), p.n_cols()))
            .collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

fn check_shapes(params: &[&mut DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("optimizer", format!("{} params, {} grads", params.len(), grads.len())));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::dim("optimizer", format!("tensor {k}: {:?} vs {:?}", p.shape(), g.shape())));
        }
    }
    Ok(())
}

/// One Adam step with decoupled weight decay: every parameter is first
/// shrunk by `1 − lr·wd`, then moved by the bias-corrected moment ratio.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[DenseMatrix],
    state: &mut OptimizerState,
    hp: AdamParams,
) -> Result<()> {
    check_shapes(params, grads)?;
    if state.first_moment.len() != params.len() {
        return Err(Error::dim("adam_step", "optimizer state does not match parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let decay = 1.0 - hp.lr * hp.weight_decay;
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[k].values_mut();
        let v = state.second_moment[k].values_mut();
        for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
            *mv = hp.beta1 * *mv + (1.0 - hp.beta1) * gv;
            *vv = hp.beta2 * *vv + (1.0 - hp.beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv = *pv * decay - hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

/// Plain gradient descent with the same decoupled weight decay.
pub fn sgd_step(params: &mut [&mut DenseMatrix], grads: &[DenseMatrix], lr: f64, weight_decay: f64) -> Result<()> {
    check_shapes(params, grads)?;
    let decay = 1.0 - lr * weight_decay;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, &gv) in p.values_mut().iter_mut().zip(g.values()) {
            *pv = *pv * decay - lr * gv;
        }
    }
    Ok(())
}
