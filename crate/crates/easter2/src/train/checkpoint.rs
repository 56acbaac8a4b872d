//! Versioned named-tensor checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "ESTR2\0"                           6 bytes
//! u32    format version (currently 1)
//! u64    meta length, then that many JSON bytes (CheckpointMeta)
//! u32    tensor count
//! per tensor:
//!   u32  name length, then name bytes (utf-8)
//!   u32  rank, then rank x u64 extents
//!   f32  raw data, row-major
//! u32    CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Stored tensors are the model parameters (by visit name), batch-norm
//! running statistics, and Adam moments under `adam.m.` / `adam.v.`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{build, Model, ModelConfig};
use crate::tensor::Tensor;
use crate::train::adam::{AdamParams, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ESTR2\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Early-stopping bookkeeping carried across save/resume.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainProgress {
    /// Completed epochs (the next epoch to run).
    pub epoch: u64,
    pub best_val_cer: Option<f64>,
    pub epochs_since_improve: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    config: ModelConfig,
    vocab_chars: String,
    adam: AdamParams,
    adam_step_count: u64,
    progress: TrainProgress,
}

fn push_tensor(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize model, optimizer state and training progress.
pub fn save_checkpoint(
    model: &Model,
    adam: &AdamState,
    vocab: &Vocabulary,
    progress: &TrainProgress,
    path: &Path,
) -> Result<()> {
    let meta = CheckpointMeta {
        config: model.config.clone(),
        vocab_chars: vocab.chars().iter().collect(),
        adam: adam.hyper,
        adam_step_count: adam.step_count,
        progress: progress.clone(),
    };
    let meta_bytes = serde_json::to_vec(&meta)
        .map_err(|e| Error::checkpoint(format!("meta serialization: {e}")))?;

    let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    model.visit_params(&mut |name, t| {
        entries.push((name, t.shape().to_vec(), t.data().to_vec()));
    });
    model.visit_state(&mut |name, values| {
        entries.push((name, vec![values.len()], values.to_vec()));
    });
    for (name, m, v) in adam.moments() {
        entries.push((format!("adam.m.{name}"), m.shape().to_vec(), m.data().to_vec()));
        entries.push((format!("adam.v.{name}"), v.shape().to_vec(), v.data().to_vec()));
    }

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, data) in &entries {
        push_tensor(&mut buf, name, shape, data);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::checkpoint(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
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

/// Restore a checkpoint: every tensor bit-exact, config verbatim.
pub fn load_checkpoint(path: &Path) -> Result<(Model, AdamState, Vocabulary, TrainProgress)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::checkpoint(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 {
        return Err(Error::checkpoint("file too short".to_string()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored_crc != computed {
        return Err(Error::checkpoint(format!(
            "checksum mismatch: stored {stored_crc:#010x}, computed {computed:#010x}"
        )));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(6)? != CHECKPOINT_MAGIC {
        return Err(Error::checkpoint("bad magic: not a checkpoint".to_string()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let meta_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::checkpoint(format!("meta parse: {e}")))?;

    let vocab = Vocabulary::from_chars(meta.vocab_chars.chars())?;
    if vocab.model_classes() != meta.config.vocab_size {
        return Err(Error::checkpoint(format!(
            "vocabulary has {} characters (+blank) but config expects vocab_size {}",
            vocab.size(),
            meta.config.vocab_size
        )));
    }

    let mut tensors: std::collections::BTreeMap<String, Tensor> =
        std::collections::BTreeMap::new();
    let count = r.u32()? as usize;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::checkpoint("tensor name is not utf-8".to_string()))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors.insert(name.clone(), Tensor::from_vec(&shape, data)).is_some() {
            return Err(Error::checkpoint(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::checkpoint(format!(
            "{} trailing bytes after tensor table",
            body.len() - r.pos
        )));
    }

    let mut model = build(&meta.config)?;
    let mut missing: Vec<String> = Vec::new();
    let mut shape_err: Option<Error> = None;
    model.visit_params_mut(&mut |name, param| {
        match tensors.remove(&name) {
            Some(t) if t.shape() == param.shape() => *param = t,
            Some(t) => {
                if shape_err.is_none() {
                    shape_err = Some(Error::checkpoint(format!(
                        "tensor {name}: stored shape {:?} does not match config shape {:?}",
                        t.shape(),
                        param.shape()
                    )));
                }
            }
            None => missing.push(name),
        }
    });
    model.visit_state_mut(&mut |name, values| {
        match tensors.remove(&name) {
            Some(t) if t.numel() == values.len() => *values = t.into_data(),
            Some(_) => {
                if shape_err.is_none() {
                    shape_err = Some(Error::checkpoint(format!(
                        "state tensor {name} has the wrong length"
                    )));
                }
            }
            None => missing.push(name),
        }
    });
    if let Some(e) = shape_err {
        return Err(e);
    }
    if !missing.is_empty() {
        return Err(Error::checkpoint(format!(
            "missing tensors: {}",
            missing.join(", ")
        )));
    }

    let mut adam = AdamState::new(meta.adam);
    adam.step_count = meta.adam_step_count;
    let moment_names: Vec<String> = tensors
        .keys()
        .filter(|k| k.starts_with("adam.m."))
        .cloned()
        .collect();
    for m_name in moment_names {
        let base = m_name.trim_start_matches("adam.m.").to_string();
        let v_name = format!("adam.v.{base}");
        let m = tensors.remove(&m_name).unwrap();
        let Some(v) = tensors.remove(&v_name) else {
            return Err(Error::checkpoint(format!("moment {v_name} missing")));
        };
        adam.insert_moments(base, m, v);
    }
    if !tensors.is_empty() {
        return Err(Error::checkpoint(format!(
            "unknown tensors in file: {}",
            tensors.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }

    Ok((model, adam, vocab, meta.progress))
}
