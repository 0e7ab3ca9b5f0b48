//! Self-contained model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LSEG"                  magic
//! u32                     format version
//! u32 + bytes             model config as `key=value` lines (UTF-8)
//! u64                     training step
//! u32                     blob count
//! per blob:
//!   u32 + bytes           name (UTF-8)
//!   u32, u32 × rank       rank, dims
//!   u32, f32 × count      element count, values
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::wire::{put_len, put_str, put_u32, put_u64, Reader};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LSEG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightBlob {
    pub fn check(&self) -> Result<()> {
        let expected: usize = self.shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch {
                name: self.name.clone(),
                detail: format!(
                    "shape {:?} holds {expected} values, blob has {}",
                    self.shape,
                    self.data.len()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Weight blobs in layer declaration order.
    pub blobs: Vec<WeightBlob>,
    pub training_step: u64,
}

impl ModelCheckpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        put_u32(&mut buf, self.format_version);
        put_str(&mut buf, &self.config.to_text())?;
        put_u64(&mut buf, self.training_step);
        put_len(&mut buf, self.blobs.len())?;
        for blob in &self.blobs {
            blob.check()?;
            put_str(&mut buf, &blob.name)?;
            put_len(&mut buf, blob.shape.len())?;
            for &d in &blob.shape {
                put_len(&mut buf, d)?;
            }
            put_len(&mut buf, blob.data.len())?;
            buf.reserve(blob.data.len() * 4);
            for v in &blob.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array4("magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let format_version = r.u32("format version")?;
        if format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: format_version,
                expected: FORMAT_VERSION,
            });
        }
        let text = r.string("config block")?;
        let config = ModelConfig::from_text(&text)
            .map_err(|e| Error::Corrupt(format!("config block: {e}")))?;
        let training_step = r.u64("training step")?;
        let count = r.u32("blob count")? as usize;
        let mut blobs = Vec::new();
        for _ in 0..count {
            let name = r.string("blob name")?;
            let rank = r.u32("blob rank")? as usize;
            if rank * 4 > r.remaining() {
                return Err(Error::Corrupt(format!("blob `{name}` rank {rank} runs past end of file")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("blob dims")? as usize);
            }
            let len = r.u32("blob length")? as usize;
            let raw = r.take(len.saturating_mul(4), "blob values")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let blob = WeightBlob { name, shape, data };
            blob.check()?;
            blobs.push(blob);
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!(
                "{} unexpected trailing bytes",
                r.remaining()
            )));
        }
        Ok(ModelCheckpoint {
            format_version,
            config,
            blobs,
            training_step,
        })
    }
}
