//! File formats: binary density grids, CSV mirrors, 16-bit PGM quick-look
//! images and plain-text metric records.
//!
//! Grid layout (little-endian): magic `SCPM`, version `u32`, `n` `u32`,
//! `half_extent` `f64`, `z_obs` `f64`, normalization `u8`, then `n²` `f64`
//! values row-major with rows ascending in `y` and columns ascending in `x`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::{DensityGrid, Normalization};
use crate::error::{Result, SimError};
use crate::kinematics::GridSpec;

pub const GRID_MAGIC: &[u8; 4] = b"SCPM";
pub const GRID_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 1;

pub fn grid_to_bytes(grid: &DensityGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.grid.n as u32).to_le_bytes());
    out.extend_from_slice(&grid.grid.half_extent.to_le_bytes());
    out.extend_from_slice(&grid.grid.z_obs.to_le_bytes());
    out.push(grid.normalization.code());
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn grid_from_bytes(bytes: &[u8]) -> Result<DensityGrid> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != GRID_MAGIC {
        return Err(SimError::Format("not a density grid file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != GRID_VERSION {
        return Err(SimError::Format(format!("unsupported grid version {version}")));
    }
    let n = u32_at(8) as usize;
    let grid = GridSpec::new(n, f64_at(12), f64_at(20))
        .map_err(|e| SimError::Format(format!("bad grid header: {e}")))?;
    let normalization = Normalization::from_code(bytes[28])?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n * n {
        return Err(SimError::Format(format!(
            "expected {} payload bytes, found {}",
            8 * n * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DensityGrid {
        values,
        grid,
        normalization,
        cell_area: grid.cell_area(),
    })
}

/// Writes the grid, then reloads and revalidates the file.
pub fn write_grid(path: &Path, grid: &DensityGrid) -> Result<()> {
    let bytes = grid_to_bytes(grid);
    fs::write(path, &bytes)?;
    let back = read_grid(path)?;
    if back.values != grid.values || back.grid != grid.grid {
        return Err(SimError::Format(format!(
            "{} did not reload identically",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<DensityGrid> {
    let grid = grid_from_bytes(&fs::read(path)?)?;
    grid.validate()?;
    Ok(grid)
}

/// CSV mirror: one `x,y,value` line per cell in file order.
pub fn grid_to_csv(grid: &DensityGrid) -> String {
    let mut s = String::from("x_m,y_m,value\n");
    for (idx, v) in grid.values.iter().enumerate() {
        let (x, y) = grid.grid.point(idx);
        let _ = writeln!(s, "{x:e},{y:e},{v:e}");
    }
    s
}

/// Binary 16-bit PGM, linear from 0 to the grid maximum, optionally with a
/// display gamma. Image rows run top to bottom, so `y` descends.
pub fn grid_to_pgm(grid: &DensityGrid, gamma: Option<f64>) -> Vec<u8> {
    let n = grid.grid.n;
    let max = grid.max();
    let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
    for iy in (0..n).rev() {
        for ix in 0..n {
            let mut t = if max > 0.0 { grid.at(ix, iy) / max } else { 0.0 };
            if let Some(g) = gamma {
                t = t.powf(1.0 / g);
            }
            let level = (t.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A named scalar with units, written one per line as `name value units`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub units: String,
}

impl MetricRecord {
    pub fn new(name: impl Into<String>, value: f64, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            units: units.into(),
        }
    }
}

pub fn metrics_to_text(records: &[MetricRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{} {:.10e} {}", r.name, r.value, r.units);
    }
    s
}

pub fn metrics_from_text(text: &str) -> Result<Vec<MetricRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut parts = l.split_whitespace();
            let (Some(name), Some(value), units) = (parts.next(), parts.next(), parts.next()) else {
                return Err(SimError::Format(format!("bad metric line: {l}")));
            };
            let value = value
                .parse()
                .map_err(|_| SimError::Format(format!("bad metric value: {l}")))?;
            Ok(MetricRecord::new(name, value, units.unwrap_or("")))
        })
        .collect()
}
