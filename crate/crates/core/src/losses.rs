//! Cosine-similarity contrastive objectives.
//!
//! For anchor rows `a_i` and candidate rows `b_j` the InfoNCE-style term is
//! `−log( exp(sim(a_i, b_i)) / Σ_j exp(sim(a_i, b_j)) )`, with the positive
//! pair included in the denominator. The intra-view term keeps the same
//! positive pair but takes its negatives from the anchor's own view,
//! excluding the anchor itself.
//!
//! All similarities may be divided by a temperature; `1.0` gives the plain
//! `exp(sim)` form.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::DenseMatrix;

/// Per-node loss columns (`s×1`) for the two anchor views.
#[derive(Debug, Clone, Copy)]
pub struct PerNode {
    pub view1: Tensor,
    pub view2: Tensor,
}

/// Scalar summary of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cn: f64,
    pub l_cv: f64,
    pub l_total: f64,
    /// Mean cosine similarity of the cross-network positive pairs.
    pub pos_sim: f64,
    /// Mean cosine similarity of the cross-network negative pairs.
    pub neg_sim: f64,
}

fn check_pair(op: &'static str, u: Tensor, v: Tensor) -> Result<usize> {
    if u.shape() != v.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", u.shape(), v.shape())));
    }
    if u.shape().0 == 0 {
        return Err(Error::InvalidParameter(format!("{op}: no nodes")));
    }
    Ok(u.shape().0)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("temperature {t} must be positive")))
    }
}

/// `(i, j) ↦ ⟨u_i, v_j⟩ / (‖u_i‖ ‖v_j‖)`; zero rows give similarity 0.
pub fn cosine_sim_matrix(tape: &mut Tape<'_>, u: Tensor, v: Tensor) -> Result<Tensor> {
    if u.shape().1 != v.shape().1 {
        return Err(Error::dim("cosine_sim_matrix", format!("{:?} vs {:?}", u.shape(), v.shape())));
    }
    let un = tape.l2_normalize_rows(u);
    let vn = tape.l2_normalize_rows(v);
    tape.matmul_nt(un, vn)
}

fn scaled_sim(tape: &mut Tape<'_>, u: Tensor, v: Tensor, temperature: f64) -> Result<Tensor> {
    let s = cosine_sim_matrix(tape, u, v)?;
    Ok(if temperature == 1.0 { s } else { tape.scale(s, 1.0 / temperature) })
}

/// `−log softmax` of the diagonal of `sim` along each row.
fn nce_rows(tape: &mut Tape<'_>, sim: Tensor) -> Result<Tensor> {
    let pos = tape.diag(sim)?;
    let e = tape.exp(sim);
    let denom = tape.sum_rows(e);
    let log_denom = tape.log(denom);
    tape.sub(log_denom, pos)
}

/// Cross-network term: online predictions of one view against the
/// (detached) target projections of the other, averaged over both
/// directions and all nodes.
pub fn cross_network_loss(
    tape: &mut Tape<'_>,
    h1: Tensor,
    h2: Tensor,
    z1_hat: Tensor,
    z2_hat: Tensor,
    temperature: f64,
) -> Result<Tensor> {
    check_temperature(temperature)?;
    check_pair("cross_network_loss", h1, z2_hat)?;
    check_pair("cross_network_loss", h2, z1_hat)?;
    check_pair("cross_network_loss", h1, h2)?;
    let s12 = scaled_sim(tape, h1, z2_hat, temperature)?;
    let l1 = nce_rows(tape, s12)?;
    let s21 = scaled_sim(tape, h2, z1_hat, temperature)?;
    let l2 = nce_rows(tape, s21)?;
    let both = tape.add(l1, l2)?;
    let m = tape.mean(both);
    Ok(tape.scale(m, 0.5))
}

/// Inter-view term for both anchor views: positives are the same node in
/// the other view, negatives every node of the other view.
pub fn inter_view_loss(tape: &mut Tape<'_>, h1: Tensor, h2: Tensor, temperature: f64) -> Result<PerNode> {
    check_temperature(temperature)?;
    check_pair("inter_view_loss", h1, h2)?;
    let s12 = scaled_sim(tape, h1, h2, temperature)?;
    let view1 = nce_rows(tape, s12)?;
    let s21 = scaled_sim(tape, h2, h1, temperature)?;
    let view2 = nce_rows(tape, s21)?;
    Ok(PerNode { view1, view2 })
}

fn intra_one(tape: &mut Tape<'_>, anchor: Tensor, other: Tensor, temperature: f64) -> Result<Tensor> {
    let s = anchor.shape().0;
    let cross = scaled_sim(tape, anchor, other, temperature)?;
    let pos = tape.diag(cross)?;
    let same = scaled_sim(tape, anchor, anchor, temperature)?;
    let e_same = tape.exp(same);
    let off_diag = tape.constant(DenseMatrix::from_fn(s, s, |i, j| if i == j { 0.0 } else { 1.0 }));
    let negs = tape.mul(e_same, off_diag)?;
    let phi = tape.sum_rows(negs);
    let e_pos = tape.exp(pos);
    let denom = tape.add(e_pos, phi)?;
    let log_denom = tape.log(denom);
    tape.sub(log_denom, pos)
}

/// Intra-view term for both anchor views: the positive is the same node in
/// the other view, negatives are the other nodes of the anchor's own view.
pub fn intra_view_loss(tape: &mut Tape<'_>, h1: Tensor, h2: Tensor, temperature: f64) -> Result<PerNode> {
    check_temperature(temperature)?;
    check_pair("intra_view_loss", h1, h2)?;
    Ok(PerNode {
        view1: intra_one(tape, h1, h2, temperature)?,
        view2: intra_one(tape, h2, h1, temperature)?,
    })
}

/// `(1/2s) Σ_i [intra¹ + inter¹ + intra² + inter²](i)`
pub fn cross_view_loss(tape: &mut Tape<'_>, h1: Tensor, h2: Tensor, temperature: f64) -> Result<Tensor> {
    let inter = inter_view_loss(tape, h1, h2, temperature)?;
    let intra = intra_view_loss(tape, h1, h2, temperature)?;
    let v1 = tape.add(intra.view1, inter.view1)?;
    let v2 = tape.add(intra.view2, inter.view2)?;
    let both = tape.add(v1, v2)?;
    let m = tape.mean(both);
    Ok(tape.scale(m, 0.5))
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta = {beta} not in [0, 1]")))
    }
}

/// `β·l_cv + (1−β)·l_cn` on the tape.
pub fn total_loss(tape: &mut Tape<'_>, l_cn: Tensor, l_cv: Tensor, beta: f64) -> Result<Tensor> {
    check_beta(beta)?;
    let a = tape.scale(l_cv, beta);
    let b = tape.scale(l_cn, 1.0 - beta);
    tape.add(a, b)
}

/// Scalar version of [`total_loss`] with empty similarity diagnostics.
pub fn combine(l_cn: f64, l_cv: f64, beta: f64) -> Result<LossBreakdown> {
    check_beta(beta)?;
    Ok(LossBreakdown {
        l_cn,
        l_cv,
        l_total: beta * l_cv + (1.0 - beta) * l_cn,
        pos_sim: 0.0,
        neg_sim: 0.0,
    })
}

/// The full objective of one step.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Tensor,
    pub l_cn: Tensor,
    pub l_cv: Tensor,
}

pub fn merit_objective(
    tape: &mut Tape<'_>,
    h1: Tensor,
    h2: Tensor,
    z1_hat: Tensor,
    z2_hat: Tensor,
    beta: f64,
    temperature: f64,
) -> Result<Objective> {
    let l_cn = cross_network_loss(tape, h1, h2, z1_hat, z2_hat, temperature)?;
    let l_cv = cross_view_loss(tape, h1, h2, temperature)?;
    let total = total_loss(tape, l_cn, l_cv, beta)?;
    Ok(Objective { total, l_cn, l_cv })
}

/// Mean positive (diagonal) and negative (off-diagonal) cosine similarity
/// between the rows of `a` and `b`.
pub fn similarity_stats(a: &DenseMatrix, b: &DenseMatrix) -> (f64, f64) {
    let norm = |m: &DenseMatrix| {
        let mut out = m.clone();
        for i in 0..out.n_rows() {
            let r = out.row_mut(i);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    };
    let s = norm(a).matmul_nt(&norm(b)).expect("matching embedding widths");
    let n = s.n_rows();
    let diag: f64 = (0..n).map(|i| s.get(i, i)).sum();
    let total: f64 = s.values().iter().sum();
    let pos = diag / n.max(1) as f64;
    let neg = if n > 1 {
        (total - diag) / (n * (n - 1)) as f64
    } else {
        0.0
    };
    (pos, neg)
}
