//! Checkpoint container.
//!
//! Layout: `u64` LE header length, UTF-8 JSON header, little-endian tensor
//! blobs in header order, then the CRC-32 of the blob section as `u32` LE.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    spec: NetworkSpec,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

/// Network weights and buffers plus arbitrary extra tensors (for example
/// optimizer momentum) and a JSON metadata blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: NetworkSpec,
    pub tensors: Vec<(String, Tensor<T>)>,
    pub meta: serde_json::Value,
}

impl<T: Real> Checkpoint<T> {
    pub fn from_network(net: &mut Network<T>, meta: serde_json::Value) -> Self {
        let spec = net.spec().clone();
        let tensors = net
            .state_mut()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Self {
            spec,
            tensors,
            meta,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every network tensor from the checkpoint; names and shapes
    /// must all be present.
    pub fn restore(&self, net: &mut Network<T>) -> Result<()> {
        if net.spec() != &self.spec {
            return Err(Error::Checkpoint(
                "network spec differs from checkpoint".into(),
            ));
        }
        for (name, t) in net.state_mut() {
            let saved = self
                .tensor(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if saved.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, network expects {:?}",
                    saved.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(saved.data());
        }
        Ok(())
    }

    pub fn to_network(&self) -> Result<Network<T>> {
        let mut net = Network::new(self.spec.clone(), 0)?;
        self.restore(&mut net)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            dtype: T::DTYPE.into(),
            spec: self.spec.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut blob = Vec::new();
        for (_, t) in &self.tensors {
            for &v in t.data() {
                v.put_le(&mut blob);
            }
        }
        let mut out = Vec::with_capacity(12 + json.len() + blob.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out.extend_from_slice(&crc32fast::hash(&blob).to_le_bytes());
        Ok(out)
    }

    /// Parses a container. Blobs stored in the other precision are
    /// converted.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 {
            return Err(corrupt("file too short"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let blob_start = 8usize
            .checked_add(hlen)
            .filter(|&s| s + 4 <= bytes.len())
            .ok_or_else(|| corrupt("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&bytes[8..blob_start])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let blob = &bytes[blob_start..bytes.len() - 4];
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(blob) != crc {
            return Err(corrupt("CRC mismatch"));
        }
        let width = match header.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            d => return Err(Error::Checkpoint(format!("unknown dtype `{d}`"))),
        };
        let read = |b: &[u8]| -> T {
            if width == T::BYTES {
                T::get_le(b)
            } else if width == 4 {
                T::of(f64::from(f32::get_le(b)))
            } else {
                T::of(f64::get_le(b))
            }
        };
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = offset + n * width;
            if end > blob.len() {
                return Err(corrupt("blob section truncated"));
            }
            let data = blob[offset..end].chunks_exact(width).map(read).collect();
            tensors.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
            offset = end;
        }
        if offset != blob.len() {
            return Err(corrupt("trailing bytes in blob section"));
        }
        Ok(Self {
            spec: header.spec,
            tensors,
            meta: header.meta,
        })
    }
}

pub fn write_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_detector, DetectorConfig, HeadKind, NormKind};

    fn net() -> Network<f32> {
        let spec = build_detector(DetectorConfig::Desk, HeadKind::Sigmoid, NormKind::Batch);
        Network::new(spec, 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut a = net();
        let ck = Checkpoint::from_network(&mut a, serde_json::json!({"epoch": 4}));
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        let b = back.to_network().unwrap();
        let x = Tensor::from_fn(&[1, 20, 20, 3], |i| (i as f32 * 0.37).sin());
        assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
    }

    #[test]
    fn widening_preserves_values() {
        let mut a = net();
        let ck = Checkpoint::from_network(&mut a, serde_json::Value::Null);
        let wide = Checkpoint::<f64>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        for ((_, t32), (_, t64)) in ck.tensors.iter().zip(&wide.tensors) {
            assert!(t32
                .data()
                .iter()
                .zip(t64.data())
                .all(|(&x, &y)| f64::from(x) == y));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut a = net();
        let mut bytes = Checkpoint::from_network(&mut a, serde_json::Value::Null)
            .to_bytes()
            .unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 1;
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes),
            Err(Error::Checkpoint(_))
        ));
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..n / 2]).is_err());
    }

    #[test]
    fn header_is_readable_json() {
        let mut a = net();
        let bytes = Checkpoint::from_network(&mut a, serde_json::Value::Null)
            .to_bytes()
            .unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(v["dtype"], "f32");
        assert_eq!(v["format_version"], CHECKPOINT_VERSION);
        assert!(v["tensors"].as_array().unwrap().len() > 20);
    }
}
