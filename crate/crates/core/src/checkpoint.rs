//! Binary parameter snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"PTGAN-CKPT-1"
//! u32 layer count
//! per layer: weight matrix, bias matrix
//! matrix: u32 rows, u32 cols, rows*cols f64 (row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::{Layer, MlpParams};

pub const MAGIC: &[u8; 12] = b"PTGAN-CKPT-1";

/// Refuse absurd headers before allocating.
const MAX_LAYERS: usize = 1024;

pub fn encode(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_params() * 8 + params.layers.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn matrix(&mut self, what: &str) -> Result<Tensor> {
        let rows = self.u32(what)?;
        let cols = self.u32(what)?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("{what} of {rows}x{cols} exceeds remaining bytes")))?;
        let bytes = self.take(n * 8, what)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{what} contains non-finite values")));
        }
        Ok(Tensor::from_vec(rows, cols, data)?)
    }
}

pub fn decode(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let n_layers = r.u32("layer count")?;
    if n_layers == 0 || n_layers > MAX_LAYERS {
        return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let weight = r.matrix(&format!("layer {i} weight"))?;
        let bias = r.matrix(&format!("layer {i} bias"))?;
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::Checkpoint(format!("layer {i} has an empty weight")));
        }
        if bias.shape() != (1, weight.cols()) {
            return Err(Error::Checkpoint(format!(
                "layer {i} bias is {:?}, expected (1, {})",
                bias.shape(),
                weight.cols()
            )));
        }
        if let Some(prev) = layers.last().map(|l: &Layer| l.weight.cols()) {
            if weight.rows() != prev {
                return Err(Error::Checkpoint(format!(
                    "layer {i} takes {} inputs but the previous layer emits {prev}",
                    weight.rows()
                )));
            }
        }
        layers.push(Layer { weight, bias });
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(MlpParams { layers })
}

pub fn save(path: &Path, params: &MlpParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<MlpParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
