//! Versioned binary container of named parameter tensors.
//!
//! Layout, all integers little-endian:
//! `MAGIC | version: u32 | echo_len: u64 | echo (UTF-8) | count: u32 |`
//! then per tensor `name_len: u32 | name | rank: u32 | dims: u64 x rank |
//! values: f64 x prod(dims)`.

use std::path::Path;

use crate::error::{Result, TrainError};
use crate::model::Model;
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"WALSHCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Configuration text stored alongside the tensors.
    pub config_echo: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Snapshot of every parameter tensor of `model`, including statistics.
    pub fn from_model<S: Real>(model: &mut Model<S>, config_echo: impl Into<String>) -> Self {
        let mut tensors = Vec::new();
        model.visit_params(&mut |v| {
            tensors.push(NamedTensor {
                name: v.name.clone(),
                dims: v.dims.clone(),
                values: v.value.iter().map(|x| x.to_f64_lossy()).collect(),
            });
        });
        Self {
            version: VERSION,
            config_echo: config_echo.into(),
            tensors,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.config_echo.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_echo.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(TrainError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let echo_len = r.usize()?;
        let config_echo = String::from_utf8(r.take(echo_len)?.to_vec())
            .map_err(|_| TrainError::Checkpoint("config echo is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| TrainError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::new();
            for _ in 0..rank {
                dims.push(r.usize()?);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| TrainError::Checkpoint(format!("{name}: dimensions overflow")))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| TrainError::Checkpoint("tensor too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(NamedTensor { name, dims, values });
        }
        if r.pos != bytes.len() {
            return Err(TrainError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            version,
            config_echo,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Writes the stored values into `model` after checking that every
    /// tensor name and shape matches.
    pub fn restore<S: Real>(&self, model: &mut Model<S>) -> Result<()> {
        let mut expected = Vec::new();
        model.visit_params(&mut |v| expected.push((v.name.clone(), v.dims.clone())));
        if expected.len() != self.tensors.len() {
            return Err(TrainError::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, dims), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *dims != t.dims {
                return Err(TrainError::Checkpoint(format!(
                    "expected {name} {dims:?}, found {} {:?}",
                    t.name, t.dims
                )));
            }
        }
        let mut k = 0;
        model.visit_params(&mut |v| {
            for (dst, &src) in v.value.iter_mut().zip(&self.tensors[k].values) {
                *dst = S::from_f64_lossy(src);
            }
            k += 1;
        });
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TrainError::Checkpoint(format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| TrainError::Checkpoint(format!("length {v} does not fit in memory")))
    }
}
