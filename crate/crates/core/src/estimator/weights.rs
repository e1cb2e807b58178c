//! Versioned binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "GAWEIGHT"
//! version    u32      = 1
//! meta_len   u32      length of the JSON metadata block
//! meta       bytes    {"arch": NetArch, "provenance": {...}}
//! n_tensors  u32
//! per tensor: name_len u16, name bytes, ndim u8, dims u32 × ndim
//! data       f32 × Σ tensor sizes, tensors in table order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ConvRegressor, NetArch, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"GAWEIGHT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    arch: NetArch,
    provenance: serde_json::Value,
}

pub fn encode<T: Scalar>(net: &ConvRegressor<T>, provenance: &serde_json::Value) -> Vec<u8> {
    let meta = serde_json::to_vec(&Meta {
        arch: net.arch().clone(),
        provenance: provenance.clone(),
    })
    .expect("metadata serialises");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(net.tensors().len() as u32).to_le_bytes());
    for t in net.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for d in &t.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    for t in net.tensors() {
        for v in &t.data {
            out.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Weights(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a weight file, returning the network and its provenance block.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(ConvRegressor<T>, serde_json::Value)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Weights("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Weights(format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Weights(format!("metadata: {e}")))?;
    let n = r.u32()? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?;
        let ndim = r.take(1)?[0] as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        table.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(n);
    for (name, shape) in table {
        let count: usize = shape.iter().product();
        let raw = r.take(count * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Weights(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((ConvRegressor::from_tensors(meta.arch, tensors)?, meta.provenance))
}

pub fn save<T: Scalar>(net: &ConvRegressor<T>, provenance: &serde_json::Value, path: &Path) -> Result<()> {
    fs::write(path, encode(net, provenance)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(ConvRegressor<T>, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Weights(m) => Error::Weights(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::TargetGeometry;

    #[test]
    fn round_trip_f32_is_exact() {
        let net = ConvRegressor::<f32>::new(NetArch::video(&TargetGeometry::new(8, 6, 0.5), 4), 3, 120.0, 1.0).unwrap();
        let prov = serde_json::json!({"seed": 3});
        let bytes = encode(&net, &prov);
        assert_eq!(&bytes[..8], MAGIC);
        let (back, p) = decode::<f32>(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(p, prov);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = ConvRegressor::<f32>::new(NetArch::image(&TargetGeometry::new(8, 6, 0.5)), 3, 120.0, 1.0).unwrap();
        let bytes = encode(&net, &serde_json::Value::Null);
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f32>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
    }
}
