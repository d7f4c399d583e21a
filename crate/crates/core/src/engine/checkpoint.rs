//! Binary checkpoint files for interrupted marginal runs.
//!
//! Layout (little-endian): magic `SCCK`, version `u32`, 32-byte job
//! fingerprint, completed row count `u32`, then the completed rows' raw
//! values as row-major `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SimError};

pub const MAGIC: &[u8; 4] = b"SCCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: [u8; 32],
    pub completed_rows: u32,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&self.completed_rows.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 44 || &bytes[..4] != MAGIC {
            return Err(SimError::Format("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(SimError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let fingerprint: [u8; 32] = bytes[8..40].try_into().unwrap();
        let completed_rows = u32::from_le_bytes(bytes[40..44].try_into().unwrap());
        let body = &bytes[44..];
        if body.len() % 8 != 0 {
            return Err(SimError::Format("truncated checkpoint payload".into()));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            fingerprint,
            completed_rows,
            values,
        })
    }

    /// Writes via a temporary sibling and rename so a crash never leaves a
    /// half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Checks that this checkpoint belongs to the job and grid at hand.
    pub fn verify(&self, fingerprint: &[u8; 32], n: usize) -> Result<()> {
        if &self.fingerprint != fingerprint {
            return Err(SimError::FingerprintMismatch);
        }
        let rows = self.completed_rows as usize;
        if rows > n || self.values.len() != rows * n {
            return Err(SimError::Format(format!(
                "checkpoint holds {} values for {rows} rows of a {n}-wide grid",
                self.values.len()
            )));
        }
        Ok(())
    }
}
