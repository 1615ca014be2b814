//! On-disk formats: WAV audio, feature dumps, corpus manifests and model
//! checkpoints. All binary integers and floats are little-endian.

mod checkpoint;
mod features;
mod manifest;
mod model;
mod wav;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use features::{read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{parse_manifest, read_manifest, write_manifest, ManifestEntry, Split};
pub use model::SavedModel;
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}
