//! `CKPT1` checkpoint files: magic `CKPT1`, u32 LE step, f64 LE learning rate,
//! u32 LE parameter count, then the parameters as f64 LE.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 5] = b"CKPT1";
const HEADER_LEN: usize = 5 + 4 + 8 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u32,
    /// Learning rate at the end of the checkpoint interval.
    pub eta: f64,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if !self.eta.is_finite() || self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint"));
        }
        let count = u32::try_from(self.theta.len())
            .map_err(|_| Error::Format("too many parameters".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.theta.len());
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.eta.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for v in &self.theta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("checkpoint header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[..5] != CKPT_MAGIC {
            return Err(Error::Format("bad magic, expected CKPT1".into()));
        }
        let step = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let eta = f64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let count = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        let payload = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "{count} parameters need {expected} bytes, found {}",
                payload.len()
            )));
        }
        let theta: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !eta.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint file"));
        }
        Ok(Self { step, eta, theta })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn file_name(&self) -> String {
        format!("checkpoint_{:06}.ckpt", self.step)
    }
}

/// Reads every `*.ckpt` file in `dir`, sorted by step.
pub fn read_checkpoint_dir(dir: impl AsRef<Path>) -> Result<Vec<Checkpoint>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    let mut cks = paths.iter().map(Checkpoint::read).collect::<Result<Vec<_>>>()?;
    cks.sort_by_key(|c| c.step);
    Ok(cks)
}
