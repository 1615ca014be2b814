use std::path::Path;

use super::Reader;
use crate::error::{Error, Result};
use crate::layers::VariantTag;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FANM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// A variant tag, named scalar settings stored as `f64`, and named `f32`
/// tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: VariantTag,
    pub meta: Vec<(String, f64)>,
    pub tensors: Vec<CheckpointTensor>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Result<f64> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&CheckpointTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.tag.to_byte());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_name(&mut out, k)?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() || t.shape.len() > u8::MAX as usize {
                return Err(Error::Format(format!("tensor {} has inconsistent shape", t.name)));
            }
            put_name(&mut out, &t.name)?;
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let tag = VariantTag::from_byte(r.u8()?)?;
        let n_meta = r.u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta.min(1024));
        for _ in 0..n_meta {
            let k = get_name(&mut r)?;
            meta.push((k, r.f64()?));
        }
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name = get_name(&mut r)?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            tensors.push(CheckpointTensor { name, shape, data });
        }
        if !r.finished() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self { tag, meta, tensors })
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Format("name too long".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

fn get_name(r: &mut Reader<'_>) -> Result<String> {
    let n = r.u16()? as usize;
    String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("name is not UTF-8".into()))
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
