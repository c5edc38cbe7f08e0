//! Binary checkpoints: a magic line, a one-line JSON header with the config
//! and a tensor manifest, then raw little-endian f64 data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{Model, VocabSizes};
use super::tensor::Mat;
use super::train::{AdamState, Trainer};
use crate::encoding::Scheme;
use crate::error::{Error, Result};

pub const MAGIC: &str = "sfnmt-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the data section.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub scheme: Scheme,
    pub sizes: VocabSizes,
    pub epoch: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
}

fn tensors(trainer: &Trainer) -> Vec<(String, &Mat)> {
    let params = trainer.model.params();
    let mut out = Vec::new();
    for id in params.ids() {
        out.push((params.name(id).to_string(), params.get(id)));
    }
    for id in params.ids() {
        out.push((format!("adam.m.{}", params.name(id)), &trainer.adam.m[id.0]));
    }
    for id in params.ids() {
        out.push((format!("adam.v.{}", params.name(id)), &trainer.adam.v[id.0]));
    }
    out
}

pub fn to_bytes(trainer: &Trainer) -> Result<Vec<u8>> {
    let list = tensors(trainer);
    let mut entries = Vec::with_capacity(list.len());
    let mut offset = 0;
    for (name, m) in &list {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: [m.rows(), m.cols()],
            offset,
        });
        offset += m.data().len() * 8;
    }
    let header = CheckpointHeader {
        version: VERSION,
        config: trainer.model.config().clone(),
        scheme: trainer.model.scheme(),
        sizes: trainer.model.sizes(),
        epoch: trainer.epoch,
        step: trainer.adam.step,
        tensors: entries,
    };
    let mut out = format!("{MAGIC} v{VERSION}\n").into_bytes();
    out.extend(serde_json::to_vec(&header)?);
    out.push(b'\n');
    out.reserve(offset);
    for (_, m) in &list {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn split_line(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("truncated header"))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let (magic, rest) = split_line(bytes)?;
    let magic = std::str::from_utf8(magic).map_err(|_| bad("not a checkpoint"))?;
    let expected = format!("{MAGIC} v{VERSION}");
    if magic != expected {
        return Err(if magic.starts_with(MAGIC) {
            bad(format!("unsupported version {magic:?}"))
        } else {
            bad("not a checkpoint")
        });
    }
    let (json, data) = split_line(rest)?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    Ok((header, data))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Trainer> {
    let (header, data) = read_header(bytes)?;
    let mut trainer = Trainer::new(Model::new(header.config.clone(), header.scheme, header.sizes)?);
    let mut filled = 0;
    for e in &header.tensors {
        let n = e.shape[0] * e.shape[1];
        let end = e.offset + n * 8;
        if end > data.len() {
            return Err(bad(format!("tensor {} runs past the end of the file", e.name)));
        }
        let values: Vec<f64> = data[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Mat::from_vec(e.shape[0], e.shape[1], values);
        let (slot, name) = if let Some(n) = e.name.strip_prefix("adam.m.") {
            (1, n)
        } else if let Some(n) = e.name.strip_prefix("adam.v.") {
            (2, n)
        } else {
            (0, e.name.as_str())
        };
        let id = trainer
            .model
            .params()
            .find(name)
            .ok_or_else(|| bad(format!("unknown tensor {}", e.name)))?;
        if trainer.model.params().get(id).shape() != m.shape() {
            return Err(bad(format!("tensor {} has shape {:?}", e.name, e.shape)));
        }
        match slot {
            0 => *trainer.model.params_mut().get_mut(id) = m,
            1 => trainer.adam.m[id.0] = m,
            _ => trainer.adam.v[id.0] = m,
        }
        filled += 1;
    }
    if filled != 3 * trainer.model.params().len() {
        return Err(bad("checkpoint is missing tensors"));
    }
    trainer.epoch = header.epoch;
    trainer.adam = AdamState {
        step: header.step,
        ..trainer.adam
    };
    Ok(trainer)
}

pub fn save(path: &Path, trainer: &Trainer) -> Result<()> {
    std::fs::write(path, to_bytes(trainer)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Trainer> {
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
