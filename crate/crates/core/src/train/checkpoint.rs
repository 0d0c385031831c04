//! Binary checkpoint format.
//!
//! ```text
//! "CSEG" | u32 version | u32 entry count
//! entry: u16 name length | name (UTF-8) | u8 dtype (0 = f32) | u8 ndim | ndim × u32 dims | payload
//! u32 metadata length | metadata (UTF-8 JSON)
//! ```
//! All integers and payloads are little-endian. Optimizer moments are stored
//! as entries prefixed `adam.m.` and `adam.v.`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, TrainError};
use crate::model::{CSegNet, CSegNetParams, ModelConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSEG";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: CSegNetParams<f32>,
    pub adam: Option<AdamState<f32>>,
    /// Validation mean foreground Dice.
    pub score: f64,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    score: f64,
    epoch: usize,
    adam: Option<AdamMeta>,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    config: AdamConfig,
    t: u64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<CSegNet<f32>, TrainError> {
        Ok(CSegNet::from_parts(self.config.clone(), self.params.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries: Vec<(String, &Tensor<f32>)> = self.params.iter().map(|(n, t)| (n.clone(), t)).collect();
        if let Some(adam) = &self.adam {
            entries.extend(adam.m.iter().map(|(n, t)| (format!("{ADAM_M}{n}"), t)));
            entries.extend(adam.v.iter().map(|(n, t)| (format!("{ADAM_V}{n}"), t)));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, t) in entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(t.ndim() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = Metadata {
            config: self.config.clone(),
            score: self.score,
            epoch: self.epoch,
            adam: self.adam.as_ref().map(|a| AdamMeta { config: a.config, t: a.t }),
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(TrainError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::VersionUnsupported(version));
        }
        let count = r.u32()?;
        let mut params = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| TrainError::CorruptEntry("entry name is not UTF-8".into()))?
                .to_string();
            if r.u8()? != DTYPE_F32 {
                return Err(TrainError::CorruptEntry(format!("{name}: unknown dtype")));
            }
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&n| n > 0);
            let n = n.ok_or_else(|| TrainError::CorruptEntry(format!("{name}: invalid shape {shape:?}")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| TrainError::CorruptEntry(name.clone()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::from_vec(&shape, data);
            let slot = if let Some(rest) = name.strip_prefix(ADAM_M) {
                m.insert(rest.to_string(), t)
            } else if let Some(rest) = name.strip_prefix(ADAM_V) {
                v.insert(rest.to_string(), t)
            } else {
                params.insert(name.clone(), t)
            };
            if slot.is_some() {
                return Err(TrainError::CorruptEntry(format!("duplicate entry {name}")));
            }
        }
        let len = r.u32()? as usize;
        let meta: Metadata =
            serde_json::from_slice(r.take(len)?).map_err(|e| TrainError::CorruptEntry(format!("metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(TrainError::CorruptEntry("trailing bytes after metadata".into()));
        }
        let adam = match meta.adam {
            Some(a) => Some(AdamState { config: a.config, t: a.t, m, v }),
            None if m.is_empty() && v.is_empty() => None,
            None => return Err(TrainError::CorruptEntry("optimizer moments without optimizer metadata".into())),
        };
        let params = CSegNetParams::from_map(params);
        let model = CSegNet::from_parts(meta.config, params)
            .map_err(|e| TrainError::CorruptEntry(format!("parameters do not match the configuration: {e}")))?;
        Ok(Self { config: model.config, params: model.params, adam, score: meta.score, epoch: meta.epoch })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TrainError::CorruptEntry(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    fs::write(path, ckpt.to_bytes()).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })?;
    Checkpoint::from_bytes(&bytes)
}
