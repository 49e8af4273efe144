//! Binary checkpoints.
//!
//! Layout: one line of JSON (the header) terminated by `\n`, followed by raw
//! little-endian `f64` arrays. Arrays appear in the order `W1 … WL`, then `a`;
//! matrices are row-major. Each header entry records its byte offset measured
//! from the first byte after the newline, so the data section can be mapped
//! without parsing anything but the header.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{NetworkConfig, NetworkParams};

pub const FORMAT: &str = "ntklab-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub offset: u64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    #[serde(rename = "L")]
    pub depth: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub step: u64,
    pub dtype: String,
    pub arrays: Vec<ArrayEntry>,
    pub data_bytes: u64,
}

pub fn to_bytes(params: &NetworkParams, step: u64) -> Result<Vec<u8>> {
    let cfg = params.config();
    let mut arrays = Vec::with_capacity(params.depth() + 1);
    let mut offset = 0u64;
    for (i, w) in params.layers().iter().enumerate() {
        arrays.push(ArrayEntry { name: format!("W{}", i + 1), offset, rows: w.rows(), cols: w.cols() });
        offset += (w.rows() * w.cols() * 8) as u64;
    }
    arrays.push(ArrayEntry { name: "a".into(), offset, rows: params.width(), cols: 1 });
    offset += (params.width() * 8) as u64;
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        depth: cfg.depth,
        m: cfg.width,
        d: cfg.input_dim,
        seed: cfg.seed,
        step,
        dtype: "f64le".into(),
        arrays,
        data_bytes: offset,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(offset as usize);
    for w in params.layers() {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in params.output() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(NetworkParams, CheckpointHeader)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION || header.dtype != "f64le" {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{} ({})",
            header.format, header.version, header.dtype
        )));
    }
    let data = &bytes[nl + 1..];
    if data.len() as u64 != header.data_bytes {
        return Err(Error::Checkpoint(format!(
            "data section holds {} bytes, header declares {}",
            data.len(),
            header.data_bytes
        )));
    }
    let cfg = NetworkConfig::new(header.depth, header.m, header.d, header.seed);
    cfg.validate()?;
    if header.arrays.len() != cfg.depth + 1 {
        return Err(Error::Checkpoint("wrong number of arrays".into()));
    }
    let read = |e: &ArrayEntry| -> Result<Vec<f64>> {
        let start = e.offset as usize;
        let end = start + e.rows * e.cols * 8;
        let raw = data
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("array {} out of bounds", e.name)))?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
    };
    let mut layers = Vec::with_capacity(cfg.depth);
    for (l, e) in header.arrays[..cfg.depth].iter().enumerate() {
        if (e.rows, e.cols) != cfg.layer_shape(l + 1) {
            return Err(Error::Checkpoint(format!("array {} has the wrong shape", e.name)));
        }
        layers.push(Matrix::from_vec(e.rows, e.cols, read(e)?)?);
    }
    let a = read(&header.arrays[cfg.depth])?;
    let params = NetworkParams::new(cfg, layers, a)?;
    Ok((params, header))
}

pub fn save(path: &Path, params: &NetworkParams, step: u64) -> Result<()> {
    let bytes = to_bytes(params, step)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(NetworkParams, CheckpointHeader)> {
    from_bytes(&fs::read(path)?)
}
