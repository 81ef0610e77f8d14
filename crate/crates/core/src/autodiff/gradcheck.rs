use rand::seq::index::sample;
use rand::Rng;

use super::{Tape, Tensor};
use crate::augment::{seeded_rng, MeritRng};
use crate::error::{Error, Result};
use crate::graph::DenseMatrix;

/// Coordinates probed per tensor when it has more entries than this.
pub const SAMPLED_COORDS: usize = 200;
/// Denominator floor of the relative error, so that gradients that are
/// zero up to roundoff are judged on absolute error.
const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per parameter tensor.
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compares analytic gradients with central differences
/// `(f(p+ε) − f(p−ε)) / 2ε`.
///
/// `build` receives a fresh tape and one trainable tensor per entry of
/// `params`, and must return a scalar loss. Tensors with more than
/// [`SAMPLED_COORDS`] entries are checked on a seeded random subset.
pub fn finite_diff_check<'c, F>(params: &[DenseMatrix], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'c>, &[Tensor]) -> Result<Tensor>,
{
    let eval = |ps: &[DenseMatrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let ts: Vec<Tensor> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &ts)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let ts: Vec<Tensor> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &ts)?;
    if loss.shape() != (1, 1) {
        return Err(Error::Autodiff("gradient check needs a scalar loss".into()));
    }
    tape.backward(loss)?;
    let analytic: Vec<DenseMatrix> = ts.iter().map(|&t| tape.grad(t)).collect();

    let mut rng = seeded_rng(0x6772_6164);
    let mut work: Vec<DenseMatrix> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    let mut coords_checked = 0;
    for (k, p) in params.iter().enumerate() {
        let len = p.values().len();
        let coords: Vec<usize> = if len > SAMPLED_COORDS {
            sample(&mut rng, len, SAMPLED_COORDS).into_vec()
        } else {
            (0..len).collect()
        };
        let mut worst: f64 = 0.0;
        for c in coords {
            let orig = p.values()[c];
            work[k].values_mut()[c] = orig + eps;
            let up = eval(&work)?;
            work[k].values_mut()[c] = orig - eps;
            let down = eval(&work)?;
            work[k].values_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[k].values()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            coords_checked += 1;
        }
        per_param.push(worst);
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        coords_checked,
    })
}

/// Tolerance on the relative error for a case to count as passing.
pub const GRAD_TOL: f64 = 1e-4;

fn random(rows: usize, cols: usize, rng: &mut MeritRng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn positive(rows: usize, cols: usize, rng: &mut MeritRng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.5..2.0))
}

/// `Σ (out ⊙ r)` for a fixed random `r`, so that every output entry
/// contributes a distinct weight.
fn project(t: &mut Tape<'_>, out: Tensor, r: &DenseMatrix) -> Result<Tensor> {
    let rt = t.constant(r.clone());
    let p = t.mul(out, rt)?;
    Ok(t.sum(p))
}

/// Finite-difference checks of every tape primitive, every contrastive
/// loss, and one full forward pass through encoder, projector and
/// predictor, on random instances with `s` nodes, `d` input features and
/// `dl` latent dimensions.
pub fn standard_suite(seed: u64, s: usize, d: usize, dl: usize, eps: f64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    use crate::autodiff::BnStats;
    use crate::graph::{symmetric_normalize, SparseMatrix};
    use crate::losses;

    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();

    let a = random(s, d, &mut rng);
    let b = random(d, dl, &mut rng);
    let c = random(s, d, &mut rng);
    let r_sdl = random(s, dl, &mut rng);
    let r_sd = random(s, d, &mut rng);
    let r_ss = random(s, s, &mut rng);
    let r_s1 = random(s, 1, &mut rng);
    let bias = random(1, d, &mut rng);
    let slope = DenseMatrix::filled(1, 1, 0.3);
    let scale = positive(1, d, &mut rng);
    let pos = positive(s, d, &mut rng);
    let sq = random(s, s, &mut rng);

    let mut triplets = Vec::new();
    for i in 0..s {
        for j in i + 1..s {
            if rng.random_bool(0.4) {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adj = symmetric_normalize(&SparseMatrix::from_triplets(s, s, triplets)?, true)?;
    let dense_op = random(s, s, &mut rng);

    out.push(("matmul", finite_diff_check(&[a.clone(), b.clone()], eps, |t, p| {
        let m = t.matmul(p[0], p[1])?;
        project(t, m, &r_sdl)
    })?));
    out.push(("matmul_nt", finite_diff_check(&[a.clone(), c.clone()], eps, |t, p| {
        let m = t.matmul_nt(p[0], p[1])?;
        project(t, m, &r_ss)
    })?));
    out.push(("spmm_const", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.spmm_const(&adj, p[0])?;
        project(t, m, &r_sd)
    })?));
    out.push(("dense_const_matmul", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.dense_const_matmul(&dense_op, p[0])?;
        project(t, m, &r_sd)
    })?));
    out.push(("add_row_bias", finite_diff_check(&[a.clone(), bias.clone()], eps, |t, p| {
        let m = t.add_row_bias(p[0], p[1])?;
        project(t, m, &r_sd)
    })?));
    out.push(("prelu", finite_diff_check(&[a.clone(), slope.clone()], eps, |t, p| {
        let m = t.prelu(p[0], p[1])?;
        project(t, m, &r_sd)
    })?));
    out.push(("batchnorm_train", finite_diff_check(&[a.clone(), scale.clone(), bias.clone()], eps, |t, p| {
        let mut stats = BnStats::new(d);
        let m = t.batchnorm_rows(p[0], p[1], p[2], &mut stats, true)?;
        project(t, m, &r_sd)
    })?));
    out.push(("batchnorm_eval", finite_diff_check(&[a.clone(), scale.clone(), bias.clone()], eps, |t, p| {
        let mut stats = BnStats {
            mean: bias.values().to_vec(),
            var: scale.values().to_vec(),
        };
        let m = t.batchnorm_rows(p[0], p[1], p[2], &mut stats, false)?;
        project(t, m, &r_sd)
    })?));
    out.push(("l2_normalize_rows", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.l2_normalize_rows(p[0]);
        project(t, m, &r_sd)
    })?));
    out.push(("add", finite_diff_check(&[a.clone(), c.clone()], eps, |t, p| {
        let m = t.add(p[0], p[1])?;
        project(t, m, &r_sd)
    })?));
    out.push(("sub", finite_diff_check(&[a.clone(), c.clone()], eps, |t, p| {
        let m = t.sub(p[0], p[1])?;
        project(t, m, &r_sd)
    })?));
    out.push(("mul", finite_diff_check(&[a.clone(), c.clone()], eps, |t, p| {
        let m = t.mul(p[0], p[1])?;
        project(t, m, &r_sd)
    })?));
    out.push(("scale", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.scale(p[0], -1.7);
        project(t, m, &r_sd)
    })?));
    out.push(("neg", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.neg(p[0]);
        project(t, m, &r_sd)
    })?));
    out.push(("log", finite_diff_check(std::slice::from_ref(&pos), eps, |t, p| {
        let m = t.log(p[0]);
        project(t, m, &r_sd)
    })?));
    out.push(("exp", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.exp(p[0]);
        project(t, m, &r_sd)
    })?));
    out.push(("sum", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let sq = t.mul(p[0], p[0])?;
        Ok(t.sum(sq))
    })?));
    out.push(("mean", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let sq = t.mul(p[0], p[0])?;
        Ok(t.mean(sq))
    })?));
    out.push(("sum_rows", finite_diff_check(std::slice::from_ref(&a), eps, |t, p| {
        let m = t.sum_rows(p[0]);
        project(t, m, &r_s1)
    })?));
    out.push(("diag", finite_diff_check(std::slice::from_ref(&sq), eps, |t, p| {
        let m = t.diag(p[0])?;
        project(t, m, &r_s1)
    })?));

    let h1 = random(s, dl, &mut rng);
    let h2 = random(s, dl, &mut rng);
    let z1 = random(s, dl, &mut rng);
    let z2 = random(s, dl, &mut rng);
    let four = [h1.clone(), h2.clone(), z1.clone(), z2.clone()];
    out.push(("cosine_sim_matrix", finite_diff_check(&[h1.clone(), h2.clone()], eps, |t, p| {
        let m = losses::cosine_sim_matrix(t, p[0], p[1])?;
        project(t, m, &r_ss)
    })?));
    out.push(("cross_network_loss", finite_diff_check(&four, eps, |t, p| {
        losses::cross_network_loss(t, p[0], p[1], p[2], p[3], 1.0)
    })?));
    out.push(("inter_view_loss", finite_diff_check(&[h1.clone(), h2.clone()], eps, |t, p| {
        let l = losses::inter_view_loss(t, p[0], p[1], 1.0)?;
        let both = t.add(l.view1, l.view2)?;
        project(t, both, &r_s1)
    })?));
    out.push(("intra_view_loss", finite_diff_check(&[h1.clone(), h2.clone()], eps, |t, p| {
        let l = losses::intra_view_loss(t, p[0], p[1], 1.0)?;
        let both = t.add(l.view1, l.view2)?;
        project(t, both, &r_s1)
    })?));
    out.push(("cross_view_loss", finite_diff_check(&[h1.clone(), h2.clone()], eps, |t, p| {
        losses::cross_view_loss(t, p[0], p[1], 1.0)
    })?));
    out.push(("total_loss", finite_diff_check(&four, eps, |t, p| {
        Ok(losses::merit_objective(t, p[0], p[1], p[2], p[3], 0.6, 1.0)?.total)
    })?));
    out.push(("total_loss_tempered", finite_diff_check(&four, eps, |t, p| {
        Ok(losses::merit_objective(t, p[0], p[1], p[2], p[3], 0.3, 0.5)?.total)
    })?));

    // encoder → projector → predictor on two views, target outputs fixed
    let x = random(s, d, &mut rng);
    let w_enc = random(d, dl, &mut rng);
    let heads: Vec<DenseMatrix> = (0..2)
        .flat_map(|_| {
            [
                random(dl, dl, &mut rng),
                random(1, dl, &mut rng),
                positive(1, dl, &mut rng),
                random(1, dl, &mut rng),
                DenseMatrix::filled(1, 1, 0.25),
                random(dl, dl, &mut rng),
                random(1, dl, &mut rng),
            ]
        })
        .collect();
    let mut params = vec![w_enc, slope.clone()];
    params.extend(heads);
    out.push(("full_forward", finite_diff_check(&params, eps, |t, p| {
        let head = |t: &mut Tape<'_>, h: Tensor, k: usize| -> Result<Tensor> {
            let q = &p[2 + 7 * k..9 + 7 * k];
            let mut stats = BnStats::new(dl);
            let a = t.matmul(h, q[0])?;
            let a = t.add_row_bias(a, q[1])?;
            let a = t.batchnorm_rows(a, q[2], q[3], &mut stats, true)?;
            let a = t.prelu(a, q[4])?;
            let a = t.matmul(a, q[5])?;
            t.add_row_bias(a, q[6])
        };
        let xw = t.dense_const_matmul(&x, p[0])?;
        let prop1 = t.spmm_const(&adj, xw)?;
        let e1 = t.prelu(prop1, p[1])?;
        let prop2 = t.dense_const_matmul(&dense_op, xw)?;
        let e2 = t.prelu(prop2, p[1])?;
        let p1 = head(t, e1, 0)?;
        let p2 = head(t, e2, 0)?;
        let q1 = head(t, p1, 1)?;
        let q2 = head(t, p2, 1)?;
        let z1t = t.constant(z1.clone());
        let z2t = t.constant(z2.clone());
        Ok(losses::merit_objective(t, q1, q2, z1t, z2t, 0.6, 1.0)?.total)
    })?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_roundoff() {
        let x = DenseMatrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let r = finite_diff_check(&[x], 1e-6, |t, p| {
            let sq = t.mul(p[0], p[0])?;
            let s = t.scale(sq, 1.5);
            Ok(t.sum(s))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.coords_checked, 3);
    }
}

#[cfg(test)]
mod suite_tests {
    use super::*;

    #[test]
    fn standard_suite_passes() {
        for (name, r) in standard_suite(3, 6, 4, 3, 1e-6).unwrap() {
            assert!(r.max_rel_error < GRAD_TOL, "{name}: {r:?}");
        }
    }
}
