//! Plain-text dataset files.
//!
//! * edges: one `src<TAB>dst` pair per line (an optional third column is a
//!   weight), 0-based ids, `#` starts a comment line
//! * features / dense matrices: header `N D`, then `N` rows of `D` reals
//! * labels: one integer class id per line
//! * split: lines `train: ...`, `val: ...`, `test: ...`
//!
//! A dataset directory holds `edges.txt`, `features.txt` and optionally
//! `labels.txt` and `split.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DataSplit, DenseMatrix, Graph, SparseMatrix};
use crate::error::{Error, Result};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLIT_FILE: &str = "split.txt";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Loads a graph. The edge list is symmetrized, self-loops are dropped and
/// repeated pairs collapse to the first occurrence (in either direction).
pub fn load_graph(edge_path: &Path, feature_path: &Path, label_path: Option<&Path>) -> Result<Graph> {
    let features = read_dense(feature_path)?;
    let n = features.n_rows();
    let adjacency = read_edges(edge_path, n)?;
    let labels = label_path.map(|p| read_labels(p, n)).transpose()?;
    Graph::new(features, adjacency, labels, None)
}

/// Loads `edges.txt`, `features.txt` and, when present, `labels.txt` and
/// `split.txt` from `dir`.
pub fn load_dataset_dir(dir: &Path) -> Result<Graph> {
    let labels = dir.join(LABELS_FILE);
    let mut g = load_graph(
        &dir.join(EDGES_FILE),
        &dir.join(FEATURES_FILE),
        labels.exists().then_some(labels.as_path()),
    )?;
    let split = dir.join(SPLIT_FILE);
    if split.exists() {
        let s = read_split(&split)?;
        s.validate(g.num_nodes())?;
        g.splits = Some(s);
    }
    Ok(g)
}

pub fn read_edges(path: &Path, n: usize) -> Result<SparseMatrix> {
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (ln, line) in read_lines(path)?.iter().enumerate() {
        let line_no = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(path, line_no, format!("expected `src<TAB>dst`, got {t:?}")));
        }
        let parse_id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line_no, format!("bad node id {s:?}")))
        };
        let (u, v) = (parse_id(fields[0])?, parse_id(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite())
                .ok_or_else(|| parse_err(path, line_no, format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        if u >= n || v >= n {
            return Err(Error::Validation(format!(
                "{}:{line_no}: edge ({u}, {v}) out of range for {n} nodes",
                path.display()
            )));
        }
        if u == v {
            continue;
        }
        pairs.entry((u.min(v), u.max(v))).or_insert(w);
    }
    SparseMatrix::from_triplets(
        n,
        n,
        pairs
            .into_iter()
            .flat_map(|((u, v), w)| [(u, v, w), (v, u, w)]),
    )
}

pub fn read_dense(path: &Path) -> Result<DenseMatrix> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| parse_err(path, 1, "missing `N D` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, 1, format!("bad header {header:?}")))?;
    let [n, d] = dims[..] else {
        return Err(parse_err(path, 1, format!("expected `N D`, got {header:?}")));
    };
    let mut values = Vec::with_capacity(n * d);
    let mut rows = 0usize;
    for (ln, line) in lines.iter().enumerate().skip(1) {
        let line_no = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(parse_err(path, line_no, format!("more than {n} rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad real {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        if values.len() - before != d {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {d} values, found {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, lines.len(), format!("expected {n} rows, found {rows}")));
    }
    DenseMatrix::from_vec(n, d, values)
}

pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut labels = Vec::with_capacity(n);
    for (ln, line) in read_lines(path)?.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(
            t.parse::<usize>()
                .map_err(|_| parse_err(path, ln + 1, format!("bad class id {t:?}")))?,
        );
    }
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{}: {} labels for {n} nodes",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}

pub fn read_split(path: &Path) -> Result<DataSplit> {
    let mut split = DataSplit::default();
    let mut seen = [false; 3];
    for (ln, line) in read_lines(path)?.iter().enumerate() {
        let line_no = ln + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (key, rest) = t
            .split_once(':')
            .ok_or_else(|| parse_err(path, line_no, "expected `name: indices`"))?;
        let (slot, target) = match key.trim() {
            "train" => (0, &mut split.train_idx),
            "val" => (1, &mut split.val_idx),
            "test" => (2, &mut split.test_idx),
            other => return Err(parse_err(path, line_no, format!("unknown split {other:?}"))),
        };
        if seen[slot] {
            return Err(parse_err(path, line_no, format!("duplicate `{}` line", key.trim())));
        }
        seen[slot] = true;
        for tok in rest.split_whitespace() {
            target.push(
                tok.parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad index {tok:?}")))?,
            );
        }
    }
    if seen != [true; 3] {
        return Err(parse_err(path, 0, "split file needs train:, val: and test: lines"));
    }
    Ok(split)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `N D` then the rows. Uses the shortest representation that parses
/// back to the same `f64`.
pub fn write_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_dense_with(path, m, |buf, v| write!(buf, "{v}"))
}

pub(crate) fn write_dense_with(
    path: &Path,
    m: &DenseMatrix,
    fmt: impl Fn(&mut String, f64) -> std::fmt::Result,
) -> Result<()> {
    let mut w = create(path)?;
    let mut buf = String::new();
    writeln!(buf, "{} {}", m.n_rows(), m.n_cols()).expect("string write");
    w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    for row in m.rows() {
        buf.clear();
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                buf.push(' ');
            }
            fmt(&mut buf, v).expect("string write");
        }
        buf.push('\n');
        w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

/// Writes each undirected edge once as `u<TAB>v` with `u < v`; non-unit
/// weights get a third column.
pub fn write_edges(path: &Path, adjacency: &SparseMatrix) -> Result<()> {
    let mut w = create(path)?;
    for (i, j, v) in adjacency.iter().filter(|&(i, j, _)| i < j) {
        let line = if v == 1.0 {
            format!("{i}\t{j}\n")
        } else {
            format!("{i}\t{j}\t{v}\n")
        };
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn write_split(path: &Path, split: &DataSplit) -> Result<()> {
    let mut w = create(path)?;
    for (name, idx) in [
        ("train", &split.train_idx),
        ("val", &split.val_idx),
        ("test", &split.test_idx),
    ] {
        let joined: Vec<String> = idx.iter().map(ToString::to_string).collect();
        writeln!(w, "{name}: {}", joined.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

/// Writes a dataset directory readable by [`load_dataset_dir`].
pub fn save_dataset_dir(g: &Graph, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_edges(&dir.join(EDGES_FILE), &g.adjacency)?;
    write_dense(&dir.join(FEATURES_FILE), &g.features)?;
    if let Some(l) = &g.labels {
        write_labels(&dir.join(LABELS_FILE), l)?;
    }
    if let Some(s) = &g.splits {
        write_split(&dir.join(SPLIT_FILE), s)?;
    }
    Ok(dir.to_path_buf())
}
