//! UCKP checkpoint files.
//!
//! Layout (little-endian): `"UCKP"`, u32 version, u64 model fingerprint, u32 length
//! plus UTF-8 JSON training configuration, u32 parameter count and that many tensor
//! records, u64 optimizer step, first-moment then second-moment records, u64 epochs
//! completed. A tensor record is u32 name length, UTF-8 name, u32 rank, u32 dims,
//! f32 payload.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::kernel::{AdamState, ParamStore, Tensor};
use crate::model::UmurlModel;

pub const UCKP_MAGIC: &[u8; 4] = b"UCKP";
pub const UCKP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ParamStore<f32>,
    pub optimizer: AdamState<f32>,
    pub epochs_completed: usize,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank());
    for d in t.shape() {
        put_u32(out, *d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated checkpoint while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn record(&mut self) -> Result<(String, Tensor<f32>)> {
        let at = self.pos as u64;
        let len = self.u32("tensor name length")?;
        let name = std::str::from_utf8(self.take(len, "tensor name")?)
            .map_err(|_| Error::format(at + 4, "tensor name is not UTF-8"))?
            .to_string();
        let rank = self.u32("tensor rank")?;
        if rank > 8 {
            return Err(Error::format(self.pos as u64 - 4, format!("implausible rank {rank} for {name}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32("tensor dims")?);
        }
        let count = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
        let count = count
            .filter(|c| c.checked_mul(4).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::format(self.pos as u64, format!("truncated payload for {name}")))?;
        let data = self
            .take(4 * count, "tensor payload")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok((name, Tensor::new(&shape, data)?))
    }
}

impl Checkpoint {
    pub fn from_model(config: &TrainConfig, model: &UmurlModel<f32>, optimizer: &AdamState<f32>, epochs_completed: usize) -> Self {
        Checkpoint {
            config: TrainConfig {
                model: model.config().clone(),
                ..config.clone()
            },
            params: model.params().clone(),
            optimizer: optimizer.clone(),
            epochs_completed,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.config.model.fingerprint()
    }

    pub fn model(&self) -> Result<UmurlModel<f32>> {
        UmurlModel::from_parts(self.config.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(UCKP_MAGIC);
        put_u32(&mut out, UCKP_VERSION as usize);
        out.extend_from_slice(&self.fingerprint().to_le_bytes());
        let json = serde_json::to_string(&self.config).expect("config serialises");
        put_u32(&mut out, json.len());
        out.extend_from_slice(json.as_bytes());
        put_u32(&mut out, self.params.len());
        for (name, t) in self.params.iter() {
            put_record(&mut out, name, t);
        }
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        for buffers in [&self.optimizer.first, &self.optimizer.second] {
            for (name, t) in buffers {
                put_record(&mut out, name, t);
            }
        }
        out.extend_from_slice(&(self.epochs_completed as u64).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != UCKP_MAGIC {
            return Err(Error::format(0, "bad magic, expected UCKP"));
        }
        let version = r.u32("version")?;
        if version != UCKP_VERSION as usize {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let fingerprint = r.u64("fingerprint")?;
        let json_at = r.pos as u64;
        let len = r.u32("config length")?;
        let json = r.take(len, "config")?;
        let config: TrainConfig = serde_json::from_slice(json)
            .map_err(|e| Error::format(json_at + 4, format!("config JSON: {e}")))?;
        if config.model.fingerprint() != fingerprint {
            return Err(Error::format(8, "stored fingerprint does not match the stored configuration"));
        }

        let count_at = r.pos as u64;
        let count = r.u32("parameter count")?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let at = r.pos as u64;
            let (name, t) = r.record()?;
            params
                .insert(name, t)
                .map_err(|e| Error::format(at, e.to_string()))?;
        }
        let step = r.u64("optimizer step")?;
        let mut moments: [IndexMap<String, Tensor<f32>>; 2] = [IndexMap::new(), IndexMap::new()];
        for buffer in moments.iter_mut() {
            for (name, p) in params.iter() {
                let at = r.pos as u64;
                let (got, t) = r.record()?;
                if got != name || t.shape() != p.shape() {
                    return Err(Error::format(at, format!("optimizer record {got} does not match parameter {name}")));
                }
                buffer.insert(got, t);
            }
        }
        let epochs_completed = r.u64("epoch count")? as usize;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after checkpoint"));
        }
        let [first, second] = moments;
        let ckpt = Checkpoint {
            optimizer: AdamState {
                config: config.optimizer,
                step,
                first,
                second,
            },
            config,
            params,
            epochs_completed,
        };
        ckpt.model().map_err(|e| Error::format(count_at, e.to_string()))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and rejects a checkpoint whose model configuration differs from `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: u64) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.fingerprint() != expected {
            return Err(Error::usage(format!(
                "checkpoint fingerprint {:016x} does not match configuration {expected:016x}",
                ckpt.fingerprint()
            )));
        }
        Ok(ckpt)
    }
}
