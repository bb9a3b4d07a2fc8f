//! `UMCK` checkpoints: magic, u32 version, u32 metadata length, JSON
//! metadata, then every parameter array as little-endian f64 in declaration
//! order (per layer weight then bias, then heads).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Encoder, HeadMode, Heads, Layer, ParamSet};
use crate::binio::{put_u32, Reader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Input dimension, hidden widths, feature dimension.
    pub layer_sizes: Vec<usize>,
    /// `None` for encoder-only checkpoints (pre-training output).
    pub head_mode: Option<HeadMode>,
    pub head_count: usize,
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub variant: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub encoder: Encoder,
    pub heads: Option<Heads>,
}

impl Checkpoint {
    pub fn from_params(
        params: &ParamSet,
        seed: u64,
        epoch: usize,
        variant: Option<String>,
    ) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                layer_sizes: params.encoder.layer_sizes(),
                head_mode: Some(params.heads.mode()),
                head_count: params.heads.count(),
                seed,
                epoch,
                variant,
            },
            encoder: params.encoder.clone(),
            heads: Some(params.heads.clone()),
        }
    }

    pub fn encoder_only(encoder: &Encoder, seed: u64, epoch: usize) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                layer_sizes: encoder.layer_sizes(),
                head_mode: None,
                head_count: 0,
                seed,
                epoch,
                variant: None,
            },
            encoder: encoder.clone(),
            heads: None,
        }
    }

    pub fn params(&self) -> Result<ParamSet> {
        let heads = self
            .heads
            .clone()
            .ok_or_else(|| Error::state("checkpoint holds an encoder only"))?;
        ParamSet::new(self.encoder.clone(), heads)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(&meta);
        let mut put = |xs: &[f64]| {
            for v in xs {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for l in &self.encoder.layers {
            put(&l.weight);
            put(&l.bias);
        }
        if let Some(h) = &self.heads {
            for w in h.vectors() {
                put(w);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.magic(CHECKPOINT_MAGIC)?;
        let at = r.offset();
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.fail(at, format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let at = r.offset();
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| r.fail(at, format!("metadata is not valid JSON: {e}")))?;
        let sizes = &meta.layer_sizes;
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(r.fail(at, "metadata has invalid layer sizes"));
        }

        let mut read = |n: usize| (0..n).map(|_| r.f64()).collect::<Result<Vec<f64>>>();
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let weight = read(w[0] * w[1])?;
            let bias = read(w[1])?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weight,
                bias,
            });
        }
        let feature_dim = *sizes.last().expect("non-empty");
        let heads = match meta.head_mode {
            None => None,
            Some(HeadMode::Shared) => Some(Heads::Shared(read(feature_dim)?)),
            Some(HeadMode::PerClass) => Some(Heads::PerClass(
                (0..meta.head_count)
                    .map(|_| read(feature_dim))
                    .collect::<Result<_>>()?,
            )),
        };
        r.finish()?;
        let encoder = Encoder::new(sizes[0], layers)?;
        Ok(Checkpoint {
            meta,
            encoder,
            heads,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::decode(&fs::read(path)?)
    }
}
