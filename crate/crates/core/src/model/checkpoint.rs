//! Portable checkpoint record.
//!
//! Layout, all integers u32 little-endian and reals f64 little-endian:
//!
//! ```text
//! magic     b"CCKP"
//! version   u32 (= 1)
//! meta_len  u32, then meta_len bytes of UTF-8 JSON metadata
//! n_dims    u32, then n_dims u32 layer dimensions (input, hidden..., 1)
//! mask      input-dim bytes, 0 or 1
//! params    f64 per parameter, layer by layer: weights row-major, then bias
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predictor::Predictor;
use super::train::{LossKind, TrainConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CCKP";
pub const VERSION: u32 = 1;

/// Output transform applied to the logit when a model is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Sigmoid,
    Exp,
}

impl Link {
    pub fn for_loss(kind: LossKind) -> Self {
        match kind {
            LossKind::Ranknet => Link::Exp,
            LossKind::Logloss | LossKind::Distill => Link::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tier: String,
    pub link: Link,
    pub mask_fraction: f64,
    pub train: TrainConfig,
    /// Win-set boundary used for two-chunk RankNet labels.
    #[serde(default)]
    pub chunk_boundary: Option<usize>,
    /// Sample-selection regime the model was trained on.
    pub training_set: String,
    pub training_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub predictor: Predictor,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let p = &self.predictor;
        let mut out = Vec::with_capacity(16 + meta.len() + p.param_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(p.layer_dims().len() as u32).to_le_bytes());
        for &d in p.layer_dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend(p.mask().iter().map(|&m| u8::from(m)));
        for v in p.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::data("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::data(format!("checkpoint metadata: {e}")))?;
        let n_dims = r.u32()? as usize;
        let dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let input = *dims.first().ok_or_else(|| Error::data("checkpoint has no layers"))?;
        let mask = r
            .take(input)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::data(format!("bad mask byte {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::data("trailing bytes after checkpoint"));
        }
        let predictor = Predictor::from_parts(dims, mask, params)?;
        Ok(Checkpoint { meta, predictor })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::data("truncated checkpoint"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                tier: "ltr".into(),
                link: Link::Exp,
                mask_fraction: 0.5,
                train: TrainConfig {
                    learning_rate: 0.01,
                    epochs: 3,
                    batch_size: 8,
                    loss_kind: LossKind::Ranknet,
                    chunks: 2,
                    seed: 1,
                },
                chunk_boundary: Some(10),
                training_set: "competitive-set".into(),
                training_samples: 12,
            },
            predictor: Predictor::init(vec![4, 3, 1], vec![true, false, true, true], 8).unwrap(),
        }
    }

    #[test]
    fn byte_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
