//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ABSACKPT"            8 bytes
//! version                u32
//! dtype                  u8   (4 = f32, 8 = f64)
//! header length          u64
//! header                 UTF-8 JSON: config, vocabulary, relation rows, [name, shape] list
//! values                 every tensor in header order, row-major, little-endian
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::state::ModelState;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{Float, ParamSet, Tensor};

const MAGIC: &[u8; 8] = b"ABSACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the vocabulary it indexes.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub state: ModelState<T>,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
    relation_rows: usize,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn write_checkpoint<T: Float>(checkpoint: &Checkpoint<T>) -> Result<Vec<u8>> {
    let state = &checkpoint.state;
    let header = Header {
        config: state.config.clone(),
        vocab: checkpoint.vocab.clone(),
        relation_rows: state.relation_rows(),
        tensors: state
            .params
            .iter()
            .map(|(_, name, t)| (name.to_string(), t.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + state.params.total_len() * T::BYTES + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, t) in state.params.iter() {
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

fn decode_values<S: Float, T: Float>(raw: &[u8]) -> Vec<T> {
    raw.chunks_exact(S::BYTES)
        .map(|c| T::of(S::read_le(c).as_f64()))
        .collect()
}

/// Parses a checkpoint, converting stored values to `T` if the widths differ.
pub fn read_checkpoint<T: Float>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let width = r.take(1, "dtype")?[0] as usize;
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("unknown value width {width}")));
    }
    let header_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
    let header: Header = serde_json::from_slice(r.take(header_len as usize, "header")?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;

    let mut params = ParamSet::new();
    for (name, shape) in &header.tensors {
        let len: usize = shape.iter().product();
        let raw = r.take(len * width, name)?;
        let data = if width == 4 {
            decode_values::<f32, T>(raw)
        } else {
            decode_values::<f64, T>(raw)
        };
        let tensor = Tensor::new(shape.clone(), data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        params.insert(name, tensor)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    let mut config = header.config;
    config.precision = T::PRECISION;
    let state = ModelState::from_params(config, params, header.relation_rows)?;
    if state.vocab_len() != header.vocab.len() {
        return Err(Error::Checkpoint(format!(
            "embedding table has {} rows but the vocabulary has {} words",
            state.vocab_len(),
            header.vocab.len()
        )));
    }
    Ok(Checkpoint {
        state,
        vocab: header.vocab,
    })
}

pub fn save_checkpoint<T: Float>(path: impl AsRef<Path>, checkpoint: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, write_checkpoint(checkpoint)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Float>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
