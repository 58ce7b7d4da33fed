//! JSON container shared by models, residual statistics and standardizers.
//!
//! ```json
//! {
//!   "format": "phmadv-container",
//!   "version": 1,
//!   "kind": "normality-lstm",
//!   "architecture": { ... },
//!   "tensors": [ { "name": "layer0.w_input", "shape": [8, 200], "data": "<base64>" } ],
//!   "metadata": { ... }
//! }
//! ```
//!
//! `data` is the base64 (standard alphabet, padded) encoding of the tensor's
//! values as little-endian IEEE-754 doubles, in row-major order. Decoding
//! is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::FORMAT_VERSION;

pub const FORMAT_NAME: &str = "phmadv-container";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub architecture: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Container {
    pub fn new(kind: &str, architecture: serde_json::Value) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            kind: kind.to_string(),
            architecture,
            tensors: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.tensors.push(TensorEntry {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            data: encode_values(tensor.data()),
        });
    }

    /// Looks up and decodes a tensor, checking it has the expected shape.
    pub fn tensor(&self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let entry = self
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name:?}")))?;
        if entry.shape != shape {
            return Err(Error::Container(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                entry.shape
            )));
        }
        let values = decode_values(&entry.data)?;
        Tensor::new(entry.shape.clone(), values).map_err(|e| Error::Container(format!("tensor {name:?}: {e}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT_NAME {
            return Err(Error::Container(format!("unknown format {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Container(format!("unsupported version {}", self.version)));
        }
        if self.kind != kind {
            return Err(Error::Container(format!(
                "expected kind {kind:?}, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn architecture_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.architecture.clone())?)
    }

    /// SHA-256 over kind, tensor names, shapes and raw value bytes.
    pub fn content_hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_bytes());
        for entry in &self.tensors {
            hasher.update(entry.name.as_bytes());
            for d in &entry.shape {
                hasher.update((*d as u64).to_le_bytes());
            }
            hasher.update(STANDARD.decode(&entry.data).map_err(decode_error)?);
        }
        Ok(hex(&hasher.finalize()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Types persisted through a [`Container`].
pub trait Persist: Sized {
    fn to_container(&self) -> Container;
    fn from_container(container: &Container) -> Result<Self>;

    fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    fn content_hash(&self) -> String {
        self.to_container()
            .content_hash()
            .expect("freshly encoded container decodes")
    }
}

pub fn encode_values(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_values(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(decode_error)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Container(format!(
            "{} bytes is not a whole number of f64",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn decode_error(e: base64::DecodeError) -> Error {
    Error::Container(format!("bad base64 payload: {e}"))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 hex digest of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn values_round_trip_bit_exactly(bits in proptest::collection::vec(any::<u64>(), 0..64)) {
            let values: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).collect();
            let back = decode_values(&encode_values(&values)).unwrap();
            let back_bits: Vec<u64> = back.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
        }
    }

    #[test]
    fn little_endian_layout() {
        // 1.0 = 0x3FF0000000000000, so the last byte is 0x3F.
        let bytes = STANDARD.decode(encode_values(&[1.0])).unwrap();
        assert_eq!(bytes, vec![0, 0, 0, 0, 0, 0, 0xF0, 0x3F]);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let mut c = Container::new("test", serde_json::json!({}));
        c.push("w", &Tensor::zeros(&[2, 3]));
        assert!(c.tensor("w", &[3, 2]).is_err());
        assert!(c.tensor("missing", &[2, 3]).is_err());
        assert_eq!(c.tensor("w", &[2, 3]).unwrap(), Tensor::zeros(&[2, 3]));
    }
}
