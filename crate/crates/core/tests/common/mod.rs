//! Independent reference implementations, written as plain loops over
//! `Vec<Vec<f64>>` so they share no code path with the library.

#![allow(dead_code)]

use merit::augment::MeritRng;
use merit::{DenseMatrix, SparseMatrix};
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rows(m: &DenseMatrix) -> Mat {
    (0..m.n_rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_mat(rng: &mut MeritRng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Undirected Erdős–Rényi graph without self-loops.
pub fn random_graph(rng: &mut MeritRng, n: usize, p: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                t.push((i, j, 1.0));
                t.push((j, i, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).unwrap()
}

/// Random graph in which every node has at least one neighbour (a ring
/// plus random chords).
pub fn connected_graph(rng: &mut MeritRng, n: usize, p: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) || rng.random_bool(p) {
                t.push((i, j, 1.0));
                t.push((j, i, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).unwrap()
}

pub fn dense_of(a: &SparseMatrix) -> Mat {
    let mut m = vec![vec![0.0; a.n_cols()]; a.n_rows()];
    for (i, j, v) in a.iter() {
        m[i][j] += v;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn max_diff(a: &Mat, b: &DenseMatrix) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, |r| r.len())), b.shape());
    let mut d: f64 = 0.0;
    for (i, r) in a.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            d = d.max((v - b.get(i, j)).abs());
        }
    }
    d
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}` from the definition.
pub fn gcn_norm(a: &SparseMatrix, self_loops: bool) -> Mat {
    let mut m = dense_of(a);
    let n = m.len();
    if self_loops {
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += 1.0;
        }
    }
    let deg: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if deg[i] > 0.0 && deg[j] > 0.0 {
                out[i][j] = m[i][j] / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(m: &Mat) -> Mat {
    let n = m.len();
    let mut a: Mat = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `α (I − (1−α) T)^{-1}` with `T = D^{-1/2} A D^{-1/2}`.
pub fn ppr(a: &SparseMatrix, alpha: f64) -> Mat {
    let t = gcn_norm(a, false);
    let n = t.len();
    let m: Mat = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - (1.0 - alpha) * t[i][j]).collect())
        .collect();
    inverse(&m)
        .into_iter()
        .map(|r| r.into_iter().map(|v| alpha * v).collect())
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Per-anchor `−log(exp(s_ii) / Σ_j exp(s_ij))` with `s = cos/τ`.
pub fn nce(anchor: &Mat, cand: &Mat, tau: f64) -> Vec<f64> {
    let n = anchor.len();
    (0..n)
        .map(|i| {
            let pos = cosine(&anchor[i], &cand[i]) / tau;
            let mut denom = 0.0;
            for j in 0..n {
                denom += (cosine(&anchor[i], &cand[j]) / tau).exp();
            }
            -(pos.exp() / denom).ln()
        })
        .collect()
}

/// Per-anchor intra-view term: positive from `other`, negatives from the
/// anchor's own view without the anchor itself.
pub fn intra(anchor: &Mat, other: &Mat, tau: f64) -> Vec<f64> {
    let n = anchor.len();
    (0..n)
        .map(|i| {
            let pos = (cosine(&anchor[i], &other[i]) / tau).exp();
            let mut neg = 0.0;
            for k in 0..n {
                if k != i {
                    neg += (cosine(&anchor[i], &anchor[k]) / tau).exp();
                }
            }
            -(pos / (pos + neg)).ln()
        })
        .collect()
}

pub fn cross_network(h1: &Mat, h2: &Mat, z1: &Mat, z2: &Mat, tau: f64) -> f64 {
    let s = h1.len() as f64;
    let a: f64 = nce(h1, z2, tau).iter().sum();
    let b: f64 = nce(h2, z1, tau).iter().sum();
    (a + b) / (2.0 * s)
}

pub fn cross_view(h1: &Mat, h2: &Mat, tau: f64) -> f64 {
    let s = h1.len() as f64;
    let mut total = 0.0;
    for v in [intra(h1, h2, tau), nce(h1, h2, tau), intra(h2, h1, tau), nce(h2, h1, tau)] {
        total += v.iter().sum::<f64>();
    }
    total / (2.0 * s)
}

pub fn total(h1: &Mat, h2: &Mat, z1: &Mat, z2: &Mat, beta: f64, tau: f64) -> f64 {
    beta * cross_view(h1, h2, tau) + (1.0 - beta) * cross_network(h1, h2, z1, z2, tau)
}

/// Textbook Adam on a scalar, without weight decay.
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new() -> Self {
        Self { m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, p: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - b1.powi(self.t));
        let vh = self.v / (1.0 - b2.powi(self.t));
        p - lr * mh / (vh.sqrt() + eps)
    }
}

/// Regularized multinomial cross-entropy, straight from the definition.
pub fn softmax_objective(x: &Mat, y: &[usize], w: &Mat, b: &[f64], l2: f64) -> f64 {
    let c = b.len();
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z: Vec<f64> = (0..c)
            .map(|k| b[k] + xi.iter().zip(w).map(|(xv, wr)| xv * wr[k]).sum::<f64>())
            .collect();
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        loss += lse - z[yi];
    }
    let reg: f64 = w.iter().flatten().map(|v| v * v).sum();
    loss / x.len() as f64 + 0.5 * l2 * reg
}

/// Fixed-step gradient descent on [`softmax_objective`] with Nesterov
/// momentum; a deliberately different solver from the library's.
pub fn softmax_solve(x: &Mat, y: &[usize], c: usize, l2: f64, step: f64, iters: usize) -> f64 {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![vec![0.0; c]; d];
    let mut b = vec![0.0; c];
    let mut w_prev = w.clone();
    let mut b_prev = b.clone();
    for it in 0..iters {
        let mom = it as f64 / (it as f64 + 3.0);
        let wy: Mat = (0..d)
            .map(|i| (0..c).map(|k| w[i][k] + mom * (w[i][k] - w_prev[i][k])).collect())
            .collect();
        let by: Vec<f64> = (0..c).map(|k| b[k] + mom * (b[k] - b_prev[k])).collect();
        let mut gw = vec![vec![0.0; c]; d];
        let mut gb = vec![0.0; c];
        for (xi, &yi) in x.iter().zip(y) {
            let z: Vec<f64> = (0..c)
                .map(|k| by[k] + xi.iter().zip(&wy).map(|(xv, wr)| xv * wr[k]).sum::<f64>())
                .collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..c {
                let r = e[k] / s - f64::from(u8::from(k == yi));
                gb[k] += r / n;
                for i in 0..d {
                    gw[i][k] += xi[i] * r / n;
                }
            }
        }
        w_prev = w.clone();
        b_prev = b.clone();
        for i in 0..d {
            for k in 0..c {
                w[i][k] = wy[i][k] - step * (gw[i][k] + l2 * wy[i][k]);
            }
        }
        for k in 0..c {
            b[k] = by[k] - step * gb[k];
        }
    }
    softmax_objective(x, y, &w, &b, l2)
}
