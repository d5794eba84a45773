//! Little-endian binary checkpoints.
//!
//! Layout:
//!
//! | bytes      | content                                           |
//! |------------|---------------------------------------------------|
//! | 8          | magic `SMPLCKPT`                                  |
//! | 4          | format version (u32)                              |
//! | 4          | layer count `L` (u32)                             |
//! | 9 per layer| `in_dim` u32, `out_dim` u32, activation u8        |
//! | 8          | parameter count `P` (u64)                         |
//! | 8 P        | parameters as f64, per layer weights then bias    |
//!
//! Activation codes: 0 ReLU, 1 identity. Weights are row-major
//! `out_dim x in_dim`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SMPLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_to_bytes(params: &ModelParams) -> Vec<u8> {
    let spec = params.spec();
    let mut out = Vec::with_capacity(24 + 9 * spec.len() + 8 * params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    for l in spec {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        out.push(match l.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
    }
    out.extend_from_slice(&(params.param_count() as u64).to_le_bytes());
    for v in params.iter_values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let layers = r.u32("layer count")? as usize;
    let mut spec = Vec::with_capacity(layers.min(1024));
    for i in 0..layers {
        let in_dim = r.u32("layer spec")? as usize;
        let out_dim = r.u32("layer spec")? as usize;
        let activation = match r.take(1, "layer spec")?[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            c => {
                return Err(Error::Checkpoint(format!(
                    "layer {i}: unknown activation code {c}"
                )))
            }
        };
        spec.push(LayerSpec::new(in_dim, out_dim, activation));
    }
    let count = r.u64("parameter count")? as usize;
    let expected: usize = spec.iter().map(LayerSpec::param_count).sum();
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "header declares {count} parameters but the spec has {expected}"
        )));
    }
    let raw = r.take(count.saturating_mul(8), "parameters")?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ModelParams::from_flat(&spec, &values).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
