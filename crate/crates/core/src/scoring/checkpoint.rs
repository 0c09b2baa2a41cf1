use std::io::{Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::Array2;

use super::model::{ModelConfig, ParserModel};
use super::params::{ParamSet, N_TENSORS};
use crate::error::{Error, Result};
use crate::treebank::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SSPCKPT\0";

/// A model snapshot with the hash of the vocabulary it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab_hash: String,
    pub model: ParserModel,
}

fn fmt_err(path: &Path, what: &str) -> Error {
    Error::Format(format!("{}: {what}", path.display()))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(CHECKPOINT_VERSION).expect("vec write");
        if self.vocab_hash.len() != 64 {
            return Err(Error::Contract("vocabulary hash must be 64 hex digits".into()));
        }
        out.extend_from_slice(self.vocab_hash.as_bytes());
        let cfg = serde_json::to_vec(&self.model.config)?;
        out.write_u32::<LE>(cfg.len() as u32).expect("vec write");
        out.extend_from_slice(&cfg);
        let t = &self.model.params.tensors;
        out.write_u32::<LE>(t.len() as u32).expect("vec write");
        for m in t {
            out.write_u32::<LE>(m.nrows() as u32).expect("vec write");
            out.write_u32::<LE>(m.ncols() as u32).expect("vec write");
            for &v in m.iter() {
                out.write_f64::<LE>(v).expect("vec write");
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = bytes;
        let trunc = |_| fmt_err(path, "truncated checkpoint");
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(fmt_err(path, "not a checkpoint file"));
        }
        let version = r.read_u32::<LE>().map_err(trunc)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "{}: checkpoint version {version}, expected {CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        let mut hash = [0u8; 64];
        r.read_exact(&mut hash).map_err(trunc)?;
        let vocab_hash = String::from_utf8(hash.to_vec())
            .map_err(|_| fmt_err(path, "corrupt vocabulary hash"))?;
        let len = r.read_u32::<LE>().map_err(trunc)? as usize;
        if r.len() < len {
            return Err(fmt_err(path, "truncated checkpoint"));
        }
        let mut config: ModelConfig = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        if let Some(v) = config.input_vocab.as_mut() {
            v.reindex();
        }
        let count = r.read_u32::<LE>().map_err(trunc)? as usize;
        if count != N_TENSORS {
            return Err(fmt_err(path, "unexpected tensor count"));
        }
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = r.read_u32::<LE>().map_err(trunc)? as usize;
            let cols = r.read_u32::<LE>().map_err(trunc)? as usize;
            if r.len() < rows * cols * 8 {
                return Err(fmt_err(path, "truncated checkpoint"));
            }
            let mut data = vec![0.0; rows * cols];
            r.read_f64_into::<LE>(&mut data).map_err(trunc)?;
            tensors.push(Array2::from_shape_vec((rows, cols), data).expect("shape matches"));
        }
        if !r.is_empty() {
            return Err(fmt_err(path, "trailing bytes"));
        }
        Ok(Checkpoint {
            vocab_hash,
            model: ParserModel {
                config,
                params: ParamSet { tensors },
            },
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

pub fn save_checkpoint(model: &ParserModel, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint {
        vocab_hash: vocab.hash(),
        model: model.clone(),
    }
    .write(path)
}

/// Loads a model, refusing it when it was trained with another vocabulary.
pub fn load_checkpoint(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<ParserModel> {
    let path = path.as_ref();
    let c = Checkpoint::read(path)?;
    if c.vocab_hash != vocab.hash() {
        return Err(Error::Incompatible(format!(
            "{} was trained with a different vocabulary",
            path.display()
        )));
    }
    Ok(c.model)
}
