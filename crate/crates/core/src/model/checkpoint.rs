//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "MERIT1"                      6 bytes
//! repeated until end of file:
//!   name_len   u32
//!   name       name_len bytes, UTF-8
//!   rows       u64
//!   cols       u64
//!   values     rows*cols f64, row-major
//! ```
//!
//! Files are written to a temporary sibling and renamed into place, so an
//! aborted run never leaves a truncated checkpoint behind.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GcnEncoder, MeritModel, MlpHead, OnlineNetwork, TargetNetwork};
use crate::autodiff::BnStats;
use crate::error::{Error, Result};
use crate::graph::DenseMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MERIT1";

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::io(path, e))
}

pub fn encode_checkpoint(model: &MeritModel) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    for (name, m) in model.named_tensors() {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((m.n_rows() as u64).to_le_bytes());
        out.extend((m.n_cols() as u64).to_le_bytes());
        for v in m.values() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &MeritModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MeritModel> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing MERIT1 header".into()));
    }
    let mut r = Reader { buf: bytes, pos: 6 };
    let mut entries: HashMap<String, DenseMatrix> = HashMap::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: implausible shape {rows}x{cols}")))?;
        let raw = r.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = DenseMatrix::from_vec(rows, cols, values)
            .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        if entries.insert(name.clone(), m).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    build_model(entries)
}

pub fn load_checkpoint(path: &Path) -> Result<MeritModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

struct Entries(HashMap<String, DenseMatrix>);

impl Entries {
    fn take(&mut self, name: &str, shape: (usize, usize)) -> Result<DenseMatrix> {
        let m = self
            .0
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if m.shape() != shape {
            return Err(Error::Checkpoint(format!(
                "{name} has shape {:?}, expected {shape:?}",
                m.shape()
            )));
        }
        Ok(m)
    }

    fn encoder(&mut self, prefix: &str, d: usize, dl: usize) -> Result<GcnEncoder> {
        Ok(GcnEncoder {
            weight: self.take(&format!("{prefix}.weight"), (d, dl))?,
            prelu_slope: self.take(&format!("{prefix}.prelu_slope"), (1, 1))?,
        })
    }

    fn head(&mut self, prefix: &str, dl: usize) -> Result<MlpHead> {
        let mut t = |n: &str, s| self.take(&format!("{prefix}.{n}"), s);
        let mean = t("bn_running_mean", (1, dl))?.into_values();
        let var = t("bn_running_var", (1, dl))?.into_values();
        if var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Checkpoint(format!("{prefix}: non-positive running variance")));
        }
        Ok(MlpHead {
            w1: t("w1", (dl, dl))?,
            b1: t("b1", (1, dl))?,
            bn_scale: t("bn_scale", (1, dl))?,
            bn_shift: t("bn_shift", (1, dl))?,
            bn_stats: BnStats { mean, var },
            prelu_slope: t("prelu_slope", (1, 1))?,
            w2: t("w2", (dl, dl))?,
            b2: t("b2", (1, dl))?,
        })
    }
}

fn build_model(entries: HashMap<String, DenseMatrix>) -> Result<MeritModel> {
    let (d, dl) = entries
        .get("online.encoder.weight")
        .map(|m| m.shape())
        .ok_or_else(|| Error::Checkpoint("missing tensor online.encoder.weight".into()))?;
    let mut e = Entries(entries);
    let momentum = e.take("momentum", (1, 1))?.get(0, 0);
    let model = MeritModel {
        online: OnlineNetwork {
            encoder: e.encoder("online.encoder", d, dl)?,
            projector: e.head("online.projector", dl)?,
            predictor: e.head("online.predictor", dl)?,
        },
        target: TargetNetwork {
            encoder: e.encoder("target.encoder", d, dl)?,
            projector: e.head("target.projector", dl)?,
        },
        momentum,
    };
    if let Some(extra) = e.0.keys().min() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}
