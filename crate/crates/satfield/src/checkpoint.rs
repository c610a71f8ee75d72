//! Versioned checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                        |
//! |--------------|------------------------------------------------|
//! | 8            | magic `SATFCKPT`                               |
//! | 4            | format version (`u32`, currently 1)            |
//! | 8            | header length `n` (`u64`)                      |
//! | n            | UTF-8 JSON header                              |
//! | 8 per value  | `f64` tensor data in header order, row-major   |
//!
//! The header holds the network configuration, epoch counter, gate state, an
//! optional variant label and trainer configuration echo, and the name,
//! group and shape of each tensor. The encoding is a pure function of the
//! state, so identical states give identical bytes. Writes go to a
//! temporary file that is renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use satfield_core::field::{init_field, FieldConfig, FieldParams, ParamGroup, SeasonGate};

use crate::error::IoError;

pub const MAGIC: &[u8; 8] = b"SATFCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: FieldParams,
    pub epoch: usize,
    pub gate: SeasonGate,
    pub variant: Option<String>,
    pub train_config: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: ParamGroup,
    shape: (usize, usize),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: FieldConfig,
    epoch: usize,
    gate: SeasonGate,
    variant: Option<String>,
    train_config: Option<Value>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.tensors();
        let header = Header {
            config: self.params.config.clone(),
            epoch: self.epoch,
            gate: self.gate,
            variant: self.variant.clone(),
            train_config: self.train_config.clone(),
            tensors: tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    group: t.group,
                    shape: t.shape,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("serializable header");
        let values: usize = tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, IoError> {
        let bad = |m: String| IoError::format(path, m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + n).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
        // Build a parameter set with the right layout, then overwrite it.
        let mut params = init_field(&header.config, 0).map_err(|e| bad(format!("bad config: {e}")))?;
        let mut offset = 20 + n;
        {
            let mut tensors = params.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(bad(format!(
                    "header lists {} tensors, configuration implies {}",
                    header.tensors.len(),
                    tensors.len()
                )));
            }
            for (t, e) in tensors.iter_mut().zip(&header.tensors) {
                if t.name != e.name || t.shape != e.shape {
                    return Err(bad(format!("tensor {} {:?} does not match layout {} {:?}", e.name, e.shape, t.name, t.shape)));
                }
                let len = t.data.len() * 8;
                let chunk = bytes.get(offset..offset + len).ok_or_else(|| bad(format!("truncated data in {}", e.name)))?;
                for (v, b) in t.data.iter_mut().zip(chunk.chunks_exact(8)) {
                    *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
                }
                offset += len;
            }
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(Checkpoint {
            params,
            epoch: header.epoch,
            gate: header.gate,
            variant: header.variant,
            train_config: header.train_config,
        })
    }

    /// Atomic write: temporary sibling file, then rename.
    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(|e| IoError::io(&tmp, e))?;
            f.write_all(&self.to_bytes()).map_err(|e| IoError::io(&tmp, e))?;
            f.sync_all().map_err(|e| IoError::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use satfield_core::field::SeasonConfig;

    fn small() -> FieldConfig {
        FieldConfig {
            trunk_width: 8,
            trunk_depth: 3,
            skip_layer: Some(1),
            head_width: 4,
            num_images: 3,
            season: Some(SeasonConfig {
                width: 4,
                ..SeasonConfig::default()
            }),
            ..FieldConfig::default()
        }
    }

    fn sample() -> Checkpoint {
        Checkpoint {
            params: init_field(&small(), 9).unwrap(),
            epoch: 4,
            gate: SeasonGate::for_epoch(4, 3),
            variant: Some("pn".into()),
            train_config: Some(serde_json::json!({"epochs": 20})),
        }
    }

    #[test]
    fn round_trip_and_byte_stability() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        let c = sample();
        c.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), fs::read(&p).unwrap());
        assert!(!p.with_extension("tmp").exists());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let p = Path::new("x");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
    }
}
