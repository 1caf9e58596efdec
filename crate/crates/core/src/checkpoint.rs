//! Versioned binary snapshots of a learner.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, little-endian
//! `u64` header length, a JSON header (spec, settings, run position and every
//! parameter's name and shape in declared order), then every parameter as
//! little-endian `f64` in the same order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envsim::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{Learner, Settings};
use crate::params::{Matrix, ParamSet};

pub const MAGIC: &[u8; 8] = b"DVSHCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamShape {
    name: String,
    shape: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    name: String,
    params: Vec<ParamShape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: EnvSpec,
    settings: Settings,
    seed: u64,
    episode: u64,
    env_steps: u64,
    blocks: Vec<Block>,
}

/// A learner's parameters plus the context needed to rebuild it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: EnvSpec,
    pub settings: Settings,
    pub seed: u64,
    pub episode: u64,
    pub env_steps: u64,
    pub online: ParamSet,
    pub target: ParamSet,
    /// One block per posterior model, in `PosteriorKind::ALL` order.
    pub posteriors: Vec<ParamSet>,
}

impl Checkpoint {
    pub fn from_learner(learner: &Learner, seed: u64, episode: u64, env_steps: u64) -> Self {
        Self {
            spec: learner.spec,
            settings: learner.settings.clone(),
            seed,
            episode,
            env_steps,
            online: learner.online.clone(),
            target: learner.target.clone(),
            posteriors: learner.posteriors.iter().map(|m| m.params.clone()).collect(),
        }
    }

    pub fn to_learner(&self) -> Result<Learner> {
        Learner::from_parameters(
            self.spec,
            self.settings.clone(),
            self.online.clone(),
            self.target.clone(),
            self.posteriors.clone(),
        )
    }

    fn blocks(&self) -> Vec<(String, &ParamSet)> {
        let mut blocks = vec![("online".to_string(), &self.online), ("target".to_string(), &self.target)];
        for (k, p) in self.posteriors.iter().enumerate() {
            blocks.push((format!("posterior.{k}"), p));
        }
        blocks
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.blocks();
        let header = Header {
            spec: self.spec,
            settings: self.settings.clone(),
            seed: self.seed,
            episode: self.episode,
            env_steps: self.env_steps,
            blocks: blocks
                .iter()
                .map(|(name, p)| Block {
                    name: name.clone(),
                    params: p
                        .iter()
                        .map(|(n, m)| ParamShape {
                            name: n.to_string(),
                            shape: m.dim(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let scalars: usize = blocks.iter().map(|(_, p)| p.num_scalars()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * scalars);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in &blocks {
            for (_, m) in p.iter() {
                for x in m.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let header_len = usize::try_from(header_len).map_err(|_| Error::Checkpoint("header too large".into()))?;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;

        let mut sets = Vec::with_capacity(header.blocks.len());
        for block in &header.blocks {
            let mut names = Vec::with_capacity(block.params.len());
            let mut values = Vec::with_capacity(block.params.len());
            for p in &block.params {
                let count = p.shape.0.checked_mul(p.shape.1).ok_or_else(|| Error::Checkpoint("bad shape".into()))?;
                let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad shape".into()))?)?;
                let data: Vec<f64> = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                names.push(p.name.clone());
                values.push(Matrix::from_shape_vec(p.shape, data).expect("length checked"));
            }
            sets.push((block.name.clone(), ParamSet::from_parts(names, values)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut sets = sets.into_iter();
        let mut next = |expected: &str| match sets.next() {
            Some((name, p)) if name == expected => Ok(p),
            _ => Err(Error::Checkpoint(format!("missing parameter block `{expected}`"))),
        };
        let online = next("online")?;
        let target = next("target")?;
        let mut posteriors = Vec::new();
        for k in 0..header.blocks.len().saturating_sub(2) {
            posteriors.push(next(&format!("posterior.{k}"))?);
        }
        Ok(Self {
            spec: header.spec,
            settings: header.settings,
            seed: header.seed,
            episode: header.episode,
            env_steps: header.env_steps,
            online,
            target,
            posteriors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
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
        let end = end.ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}
