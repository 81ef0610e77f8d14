//! Linear evaluation: a multinomial logistic-regression probe trained on
//! frozen embeddings, plus split generation and embedding export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::io::{read_dense, write_labels};
use crate::graph::{DataSplit, DenseMatrix};
use crate::model::write_atomic;

pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_ITERS: usize = 2000;
pub const GRAD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `D'×C`
    pub weight: DenseMatrix,
    /// `1×C`
    pub bias: DenseMatrix,
    pub l2_penalty: f64,
    /// Gradient-descent iterations actually run.
    pub iterations: usize,
    /// Final value of the regularized objective.
    pub final_loss: f64,
}

impl LinearProbe {
    pub fn num_classes(&self) -> usize {
        self.weight.n_cols()
    }

    pub fn logits(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = x.matmul(&self.weight)?;
        add_bias(&mut z, &self.bias);
        Ok(z)
    }

    /// Arg-max class per row; ties go to the lowest class id.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.rows().map(argmax).collect())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

fn add_bias(z: &mut DenseMatrix, b: &DenseMatrix) {
    for i in 0..z.n_rows() {
        for (v, bv) in z.row_mut(i).iter_mut().zip(b.values()) {
            *v += bv;
        }
    }
}

/// Mean cross-entropy plus `l2/2·‖W‖²`, and optionally its gradient.
fn objective(
    x: &DenseMatrix,
    y: &[usize],
    w: &DenseMatrix,
    b: &DenseMatrix,
    l2: f64,
    want_grad: bool,
) -> (f64, Option<(DenseMatrix, DenseMatrix)>) {
    let n = x.n_rows() as f64;
    let c = w.n_cols();
    let mut z = x.matmul(w).expect("probe shapes");
    add_bias(&mut z, b);
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = z.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = row[yi];
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        loss += s.ln() + m - target;
        // row now holds softmax probabilities minus the one-hot target
        for v in row.iter_mut() {
            *v /= s;
        }
        row[yi] -= 1.0;
    }
    let reg = 0.5 * l2 * w.values().iter().map(|v| v * v).sum::<f64>();
    let value = loss / n + reg;
    if !want_grad {
        return (value, None);
    }
    let mut gw = x.matmul_tn(&z).expect("probe shapes");
    for (g, &wv) in gw.values_mut().iter_mut().zip(w.values()) {
        *g = *g / n + l2 * wv;
    }
    let mut gb = DenseMatrix::zeros(1, c);
    for row in z.rows() {
        for (g, v) in gb.values_mut().iter_mut().zip(row) {
            *g += v / n;
        }
    }
    (value, Some((gw, gb)))
}

/// Fits the probe on `split.train_idx` by full-batch gradient descent with
/// Armijo backtracking, stopping once the gradient norm drops below
/// [`GRAD_TOL`] or after `iters` iterations. Weights start at zero.
pub fn probe_fit(
    embeddings: &DenseMatrix,
    labels: &[usize],
    split: &DataSplit,
    l2: f64,
    iters: usize,
) -> Result<LinearProbe> {
    if labels.len() != embeddings.n_rows() {
        return Err(Error::dim(
            "probe_fit",
            format!("{} labels for {} embeddings", labels.len(), embeddings.n_rows()),
        ));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidParameter(format!("l2 penalty {l2}")));
    }
    split.validate(embeddings.n_rows())?;
    let train = &split.train_idx;
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let mut classes = y.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Validation("training set must contain at least two classes".into()));
    }
    let c = labels.iter().copied().max().unwrap_or(0) + 1;
    let x = embeddings.select_rows(train);
    let d = x.n_cols();

    let mut w = DenseMatrix::zeros(d, c);
    let mut b = DenseMatrix::zeros(1, c);
    let (mut f, mut grad) = objective(&x, &y, &w, &b, l2, true);
    let mut step = 1.0;
    let mut it = 0;
    while it < iters {
        let (gw, gb) = grad.take().expect("gradient present");
        let gnorm2: f64 = gw.values().iter().chain(gb.values()).map(|v| v * v).sum();
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        it += 1;
        step *= 2.0;
        loop {
            let w_new = w.zip_with(&gw, "probe", |a, g| a - step * g)?;
            let b_new = b.zip_with(&gb, "probe", |a, g| a - step * g)?;
            let (f_new, _) = objective(&x, &y, &w_new, &b_new, l2, false);
            if f_new <= f - 0.5 * step * gnorm2 || step < 1e-20 {
                w = w_new;
                b = b_new;
                break;
            }
            step *= 0.5;
        }
        let (f_new, g_new) = objective(&x, &y, &w, &b, l2, true);
        f = f_new;
        grad = g_new;
    }
    Ok(LinearProbe {
        weight: w,
        bias: b,
        l2_penalty: l2,
        iterations: it,
        final_loss: f,
    })
}

/// Fraction of `idx` whose predicted class equals the label.
pub fn probe_accuracy(probe: &LinearProbe, embeddings: &DenseMatrix, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::InvalidParameter("accuracy over an empty index set".into()));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= embeddings.n_rows() || i >= labels.len()) {
        return Err(Error::Validation(format!("index {bad} out of range")));
    }
    let pred = probe.predict(&embeddings.select_rows(idx))?;
    let hits = idx.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
    Ok(hits as f64 / idx.len() as f64)
}

/// `per_class` random nodes of every class go to train, the next
/// `per_class` to validation, the rest to test. Index lists are sorted.
pub fn make_splits_per_class<R: Rng + ?Sized>(labels: &[usize], per_class: usize, rng: &mut R) -> Result<DataSplit> {
    let c = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut split = DataSplit::default();
    for class in 0..c {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 * per_class {
            return Err(Error::Validation(format!(
                "class {class} has {} nodes, needs at least {}",
                members.len(),
                2 * per_class
            )));
        }
        members.shuffle(rng);
        split.train_idx.extend(&members[..per_class]);
        split.val_idx.extend(&members[per_class..2 * per_class]);
        split.test_idx.extend(&members[2 * per_class..]);
    }
    split.train_idx.sort_unstable();
    split.val_idx.sort_unstable();
    split.test_idx.sort_unstable();
    Ok(split)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySummary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

pub fn summarize(accs: &[f64]) -> AccuracySummary {
    let n = accs.len();
    let mean = accs.iter().sum::<f64>() / n.max(1) as f64;
    let std = if n > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    AccuracySummary { mean, std, runs: n }
}

/// `dataset<TAB>accuracy<TAB>std`, both as fractions.
pub fn report_line(dataset: &str, s: &AccuracySummary) -> String {
    format!("{dataset}\t{:.4}\t{:.4}", s.mean, s.std)
}

/// Where probe splits come from across repeats.
#[derive(Debug, Clone)]
pub enum SplitSource {
    /// The same split every repeat.
    Fixed(DataSplit),
    /// A fresh `per_class` split per repeat.
    PerClass(usize),
}

/// Fits `repeats` probes with seeds `seed, seed+1, …` and returns the test
/// accuracy of each.
pub fn evaluate_embeddings(
    embeddings: &DenseMatrix,
    labels: &[usize],
    splits: &SplitSource,
    repeats: usize,
    seed: u64,
    l2: f64,
    iters: usize,
) -> Result<Vec<f64>> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    (0..repeats as u64)
        .map(|r| {
            let split = match splits {
                SplitSource::Fixed(s) => s.clone(),
                SplitSource::PerClass(k) => {
                    make_splits_per_class(labels, *k, &mut crate::augment::seeded_rng(seed + r))?
                }
            };
            let probe = probe_fit(embeddings, labels, &split, l2, iters)?;
            probe_accuracy(&probe, embeddings, labels, &split.test_idx)
        })
        .collect()
}

/// Label file written next to an embedding file.
pub fn labels_path_for(path: &Path) -> PathBuf {
    path.with_extension("labels")
}

/// Writes `N D'` followed by one row per node with 17 significant digits,
/// and the labels (one per line) to [`labels_path_for`] when given.
pub fn export_embeddings(embeddings: &DenseMatrix, path: &Path, labels: Option<&[usize]>) -> Result<()> {
    let mut s = String::with_capacity(embeddings.values().len() * 24 + 32);
    let _ = writeln!(s, "{} {}", embeddings.n_rows(), embeddings.n_cols());
    for row in embeddings.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, s.as_bytes())?;
    if let Some(l) = labels {
        if l.len() != embeddings.n_rows() {
            return Err(Error::dim("export_embeddings", "label count differs from row count"));
        }
        write_labels(&labels_path_for(path), l)?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<DenseMatrix> {
    read_dense(path)
}
