//! Named tensor maps serialized at 32-bit precision.
//!
//! Layout (little-endian): magic `D4MW`, u32 version, u32 tensor count, then
//! per tensor: length-prefixed name, u8 rank, rank u32 dims, dims-product
//! f32 values. Entries are written in name order, so files are byte-stable.

use std::collections::BTreeMap;
use std::path::Path;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"D4MW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// A name → tensor map holding model weights (and any other per-run arrays).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Insert a tensor, narrowing values to f32. Duplicate names are
    /// rejected.
    pub fn insert(&mut self, name: &str, tensor: &Tensor) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::DuplicateTensor { path: "<in-memory>".into(), name: name.into() });
        }
        self.tensors.insert(
            name.to_string(),
            StoredTensor { dims: tensor.shape.clone(), data: tensor.data.iter().map(|&v| v as f32).collect() },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.get(name)
    }

    /// Widen a stored tensor back to an f64 [`Tensor`].
    pub fn get_tensor(&self, name: &str) -> Result<Tensor> {
        let st = self.tensors.get(name).ok_or_else(|| Error::InvalidArgument {
            op: "Checkpoint::get_tensor",
            msg: format!("missing tensor {name:?}"),
        })?;
        Tensor::new(st.dims.clone(), st.data.iter().map(|&v| v as f64).collect())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    /// Names beginning with `prefix`.
    pub fn names_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.names().filter(move |n| n.starts_with(prefix))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(self.tensors.len() as u32);
        for (name, st) in &self.tensors {
            w.string(name);
            w.u8(st.dims.len() as u8);
            for &d in &st.dims {
                w.u32(d as u32);
            }
            for &v in &st.data {
                w.f32(v);
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        r.expect_version(CHECKPOINT_VERSION)?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let numel: usize = dims.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.f32()?);
            }
            if tensors.insert(name.clone(), StoredTensor { dims, data }).is_some() {
                return Err(Error::DuplicateTensor { path: path.into(), name });
            }
        }
        r.expect_end()?;
        Ok(Checkpoint { tensors })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = std::fs::read(path)?;
    Checkpoint::from_bytes(&buf, &path.display().to_string())
}
