//! Versioned binary checkpoint.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "CNNLSTM\0"
//! version    u32
//! length     u64      total file length including the checksum
//! config     u32 byte count + canonical JSON of ModelConfig
//! "SCAL"     u32 feature count, then (min, max) f64 pairs
//! "PARM"     u32 tensor count, then per tensor:
//!              u16 name length + UTF-8 name, u32 rank, u64 extents, f64 data
//! checksum   32 bytes SHA-256 of everything before it
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::preprocessing::ScalerParams;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CNNLSTM\0";
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

/// A trained model together with the scaler fitted on its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model: Model,
    pub scaler: ScalerParams,
}

pub fn save(model: &Model, scaler: &ScalerParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(model, Some(scaler))?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Bundle> {
    decode(&fs::read(path)?)
}

pub(crate) fn encode(model: &Model, scaler: Option<&ScalerParams>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u64.to_le_bytes());

    let config = serde_json::to_vec(&model.config)?;
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);

    if let Some(scaler) = scaler {
        buf.extend_from_slice(b"SCAL");
        buf.extend_from_slice(&(scaler.features() as u32).to_le_bytes());
        for (lo, hi) in scaler.min.iter().zip(&scaler.max) {
            buf.extend_from_slice(&lo.to_le_bytes());
            buf.extend_from_slice(&hi.to_le_bytes());
        }
    }

    buf.extend_from_slice(b"PARM");
    let tensors = model.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in model.block_names().iter().zip(tensors) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let total = (buf.len() + CHECKSUM_LEN) as u64;
    buf[12..20].copy_from_slice(&total.to_le_bytes());
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated(format!("while reading {what}")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tag(&mut self, tag: &[u8; 4], what: &str) -> Result<()> {
        let found = self.take(4, what)?;
        if found != tag {
            return Err(Error::Format(format!(
                "missing {what} (found tag {:?})",
                String::from_utf8_lossy(found)
            )));
        }
        Ok(())
    }
}

pub(crate) fn decode(buf: &[u8]) -> Result<Bundle> {
    if buf.len() < HEADER_LEN {
        return Err(Error::Truncated("header".into()));
    }
    if &buf[..8] != MAGIC {
        return Err(Error::Format("not a cnnlstm checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let total = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    if buf.len() < total {
        return Err(Error::Truncated(format!(
            "file has {} bytes, header declares {total}",
            buf.len()
        )));
    }
    if buf.len() > total || total < HEADER_LEN + CHECKSUM_LEN {
        return Err(Error::Format("declared length does not match file".into()));
    }
    let (body, digest) = buf.split_at(total - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }

    let mut r = Reader {
        buf: body,
        pos: HEADER_LEN,
    };
    let config_len = r.u32("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| Error::Format(format!("config block: {e}")))?;

    r.tag(b"SCAL", "scaler block")?;
    let features = r.u32("scaler feature count")? as usize;
    let mut scaler = ScalerParams {
        min: Vec::with_capacity(features),
        max: Vec::with_capacity(features),
    };
    for _ in 0..features {
        scaler.min.push(r.f64("scaler min")?);
        scaler.max.push(r.f64("scaler max")?);
    }

    r.tag(b"PARM", "parameter block")?;
    let count = r.u32("tensor count")? as usize;
    let mut model = Model::from_config(config)?;
    let names = model.block_names();
    if count != names.len() {
        return Err(Error::Format(format!(
            "config implies {} tensors, file has {count}",
            names.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for expected in &names {
        let len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8_lossy(r.take(len, "tensor name")?).into_owned();
        if &name != expected {
            return Err(Error::Format(format!("expected tensor {expected}, found {name}")));
        }
        let rank = r.u32("tensor rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("tensor extent").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64("tensor data")).collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after parameter block".into()));
    }
    model.load_tensors(tensors)?;
    Ok(Bundle { model, scaler })
}
