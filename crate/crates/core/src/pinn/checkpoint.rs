//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `GSCKPT01`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then the parameter vector as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use super::objective::UncertaintyState;
use super::train::{TrainConfig, TrainTrace};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GSCKPT01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    n_bus: usize,
    n_layers: usize,
    width: usize,
    shapes: Vec<(usize, usize)>,
    n_params: usize,
    config: TrainConfig,
    uncertainty: UncertaintyState,
    #[serde(default)]
    config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub uncertainty: UncertaintyState,
    pub config: TrainConfig,
    /// Hash of the run configuration that produced the weights.
    pub config_hash: Option<String>,
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let p = &ckpt.params;
    let header = serde_json::to_vec(&Header {
        n_bus: p.n_bus,
        n_layers: p.n_layers,
        width: p.width,
        shapes: p.shapes(),
        n_params: p.len(),
        config: ckpt.config.clone(),
        uncertainty: ckpt.uncertainty,
        config_hash: ckpt.config_hash.clone(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * p.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for x in &p.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    let blob = &bytes[body..];
    if blob.len() != 8 * header.n_params {
        return Err(bad(&format!(
            "expected {} weights, found {} bytes",
            header.n_params,
            blob.len()
        )));
    }
    let data: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = MlpParams {
        n_bus: header.n_bus,
        n_layers: header.n_layers,
        width: header.width,
        data,
    };
    if params.shapes() != header.shapes
        || MlpParams::zeros(header.n_bus, header.n_layers, header.width).len() != header.n_params
    {
        return Err(bad("header shapes disagree with architecture"));
    }
    Ok(Checkpoint {
        params,
        uncertainty: header.uncertainty,
        config: header.config,
        config_hash: header.config_hash,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_trace_csv(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string()];
    header.extend(TrainTrace::COLUMNS.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for e in 0..trace.len() {
        let mut row = vec![(e + 1).to_string()];
        row.extend(trace.row(e).iter().map(|x| format!("{x:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
