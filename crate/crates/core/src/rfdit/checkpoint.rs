//! Binary checkpoint: magic, version, JSON model config, then named
//! little-endian `f64` tensors.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{ParamStore, ToyConfig, ToyModel};
use super::codec::Codec;
use super::tape::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RFDTCKPT";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint(model: &ToyModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let config = serde_json::to_vec(&model.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(&config);
    put_u32(&mut out, model.params.len() as u32);
    for (name, m) in model.params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, 2);
        for d in [m.nrows(), m.ncols()] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ToyModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let config: ToyConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    config.validate()?;
    let reference = ToyModel::new(config.clone(), 0)?;
    let count = r.u32()? as usize;
    let mut params = ParamStore::default();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()?;
        if ndim != 2 {
            return Err(Error::Checkpoint(format!("`{name}`: expected 2 dims, got {ndim}")));
        }
        let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
        let expected = reference
            .params
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
        if expected.dim() != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "`{name}`: shape {rows}x{cols}, config expects {:?}",
                expected.dim()
            )));
        }
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(name, Mat::from_shape_vec((rows, cols), data).expect("size checked"));
    }
    if params.len() != reference.params.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors, config expects {}",
            params.len(),
            reference.params.len()
        )));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite weights".into()));
    }
    let codec = Codec::new(config.latent_channels, config.codec_seed)?;
    Ok(ToyModel { config, codec, params })
}

pub fn save_checkpoint(model: &ToyModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes = encode_checkpoint(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ToyModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
