//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "GLRSEGCK"
//! version      u32       1
//! elem_bytes   u8        4 (f32) or 8 (f64)
//! digest       32 bytes  SHA-256 of the config JSON
//! config_len   u32
//! config       config_len bytes of UTF-8 JSON
//! count        u32       number of tensors
//! per tensor:  rank u32, rank × u32 dims, then prod(dims) LE floats
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::scalar::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GLRSEGCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config_json: String,
    pub tensors: Vec<Tensor<T>>,
}

pub fn config_digest(config_json: &str) -> [u8; 32] {
    Sha256::digest(config_json.as_bytes()).into()
}

pub fn encode_checkpoint<T: Real>(config_json: &str, tensors: &[&Tensor<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.extend_from_slice(&config_digest(config_json));
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.push_le(&mut out);
        }
    }
    out
}

pub fn write_checkpoint<T: Real, W: Write>(
    mut w: W,
    config_json: &str,
    tensors: &[&Tensor<T>],
) -> std::io::Result<()> {
    w.write_all(&encode_checkpoint(config_json, tensors))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let elem = c.take(1)?[0] as usize;
    if elem != T::BYTES {
        return Err(Error::Checkpoint(format!(
            "stored {}-byte floats, requested {}-byte",
            elem,
            T::BYTES
        )));
    }
    let digest: [u8; 32] = c.take(32)?.try_into().unwrap();
    let len = c.u32()? as usize;
    let config_json = std::str::from_utf8(c.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("config is not UTF-8: {e}")))?
        .to_string();
    if config_digest(&config_json) != digest {
        return Err(Error::Checkpoint("config digest mismatch".into()));
    }
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let rank = c.u32()? as usize;
        let dims = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = c.take(n * elem)?;
        let data = raw.chunks_exact(elem).map(T::from_le).collect();
        tensors.push(Tensor::from_vec(&dims, data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint {
        config_json,
        tensors,
    })
}

pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<Checkpoint<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0f32, -2.0, 3.5, 0.0, 1e-7, 9.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![42.0f32]).unwrap();
        let bytes = encode_checkpoint("{\"x\":1}", &[&a, &b]);
        let ck: Checkpoint<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.config_json, "{\"x\":1}");
        assert_eq!(ck.tensors, vec![a, b]);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint::<f32>("{}", &[]);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], 4);
        assert_eq!(&bytes[13..45], &config_digest("{}"));
        assert_eq!(bytes.len(), 8 + 4 + 1 + 32 + 4 + 2 + 4);
    }

    #[test]
    fn corruption_detected() {
        let t = Tensor::from_vec(&[1], vec![1.0f64]).unwrap();
        let mut bytes = encode_checkpoint("{\"a\":2}", &[&t]);
        assert!(decode_checkpoint::<f32>(&bytes).is_err());
        bytes[50] ^= 1;
        assert!(decode_checkpoint::<f64>(&bytes).is_err());
        let good = encode_checkpoint("{}", &[&t]);
        assert!(decode_checkpoint::<f64>(&good[..good.len() - 1]).is_err());
    }
}
