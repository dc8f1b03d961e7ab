//! Binary checkpoint format.
//!
//! Little-endian. Header: magic `HECG`, format version `u32`, config hash
//! `u64`. Then named tensors until end of file, each as name length `u32`,
//! UTF-8 name, rows `u64`, cols `u64`, and `rows·cols` `f32` values.
//!
//! Parameters are stored under their [`ModelParams::names`], Adam moments as
//! `adam.m.<name>` / `adam.v.<name>`. Integer counters (`adam.step`,
//! `meta.epoch`) are 1×2 tensors whose two `f32` slots carry the low and
//! high 32 bits of the `u64` verbatim.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

use super::adam::AdamState;

pub const MAGIC: &[u8; 4] = b"HECG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub epoch: u64,
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
}

fn counter(v: u64) -> Tensor<f32> {
    let lo = f32::from_bits(v as u32);
    let hi = f32::from_bits((v >> 32) as u32);
    Tensor::from_vec(1, 2, vec![lo, hi]).expect("1×2")
}

fn read_counter(t: &Tensor<f32>, name: &str) -> Result<u64> {
    if t.shape() != (1, 2) {
        return Err(Error::Format(format!("{name} must be 1×2, got {:?}", t.shape())));
    }
    Ok(t.data()[0].to_bits() as u64 | ((t.data()[1].to_bits() as u64) << 32))
}

impl Checkpoint {
    fn named_tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        let names = self.params.names();
        let mut out: Vec<(String, &Tensor<f32>)> =
            names.iter().cloned().zip(self.params.tensors()).collect();
        for (name, m) in names.iter().zip(&self.adam.first) {
            out.push((format!("adam.m.{name}"), m));
        }
        for (name, v) in names.iter().zip(&self.adam.second) {
            out.push((format!("adam.v.{name}"), v));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config_hash.to_le_bytes());
        let step = counter(self.adam.step);
        let epoch = counter(self.epoch);
        let mut tensors = self.named_tensors();
        tensors.push(("adam.step".into(), &step));
        tensors.push(("meta.epoch".into(), &epoch));
        for (name, t) in tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let config_hash = r.u64()?;

        let mut params = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        let mut step = None;
        let mut epoch = None;
        while r.pos < bytes.len() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Format(format!("{name}: shape overflows")))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Format(format!("{name}: shape overflows")))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            let t = Tensor::from_vec(rows, cols, data)?;
            if name == "adam.step" {
                step = Some(read_counter(&t, &name)?);
            } else if name == "meta.epoch" {
                epoch = Some(read_counter(&t, &name)?);
            } else if name.starts_with("adam.m.") {
                first.push(t);
            } else if name.starts_with("adam.v.") {
                second.push(t);
            } else {
                params.push((name, t));
            }
        }
        let params = ModelParams::from_tensors(params.into_iter().map(|(_, t)| t).collect())?;
        if first.len() != params.names().len() || second.len() != first.len() {
            return Err(Error::Format(format!(
                "{} parameters but {}/{} moment tensors",
                params.names().len(),
                first.len(),
                second.len()
            )));
        }
        Ok(Self {
            config_hash,
            epoch: epoch.ok_or_else(|| Error::Format("missing meta.epoch".into()))?,
            params,
            adam: AdamState {
                step: step.ok_or_else(|| Error::Format("missing adam.step".into()))?,
                first,
                second,
            },
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; with `expected_hash`, refuses one written for a
/// different config or dataset.
pub fn load_checkpoint(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    if let Some(expected) = expected_hash {
        if ckpt.config_hash != expected {
            return Err(Error::HashMismatch {
                expected,
                found: ckpt.config_hash,
            });
        }
    }
    Ok(ckpt)
}
