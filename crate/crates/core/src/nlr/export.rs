//! Attention map export: 8-bit PGM, exact JSON grids, provenance dumps and
//! per-point attention files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttentionSequence, Coverage, Grid};
use crate::error::{Error, Result};

pub const GRID_FORMAT: &str = "r2cnn-grid";
pub const PROVENANCE_FORMAT: &str = "r2cnn-provenance";
pub const ATTENTION_FORMAT: &str = "r2cnn-attention";
pub const EXPORT_VERSION: u32 = 1;

/// Binary (P5) PGM; intensities are clamped to [0, 1], scaled by 255 and
/// rounded half-up.
pub fn to_pgm(grid: &Grid) -> Vec<u8> {
    let mut out = format!(
        "P5\n# {GRID_FORMAT} v{EXPORT_VERSION}\n{} {}\n255\n",
        grid.width, grid.height
    )
    .into_bytes();
    out.extend(
        grid.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8),
    );
    out
}

pub fn write_pgm(grid: &Grid, path: &Path) -> Result<()> {
    std::fs::write(path, to_pgm(grid)).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    /// One row per entry, top to bottom.
    values: Vec<Vec<f64>>,
}

pub fn grid_to_json(grid: &Grid) -> String {
    let file = GridFile {
        format: GRID_FORMAT.into(),
        version: EXPORT_VERSION,
        width: grid.width,
        height: grid.height,
        values: grid.data.chunks(grid.width.max(1)).map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_string(&file).expect("grid serializes")
}

pub fn grid_from_json(text: &str) -> Result<Grid> {
    let file: GridFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedLine(e.to_string()))?;
    if file.format != GRID_FORMAT || file.version != EXPORT_VERSION {
        return Err(Error::VersionMismatch {
            kind: GRID_FORMAT,
            found: file.version,
            expected: EXPORT_VERSION,
        });
    }
    if file.values.len() != file.height || file.values.iter().any(|r| r.len() != file.width) {
        return Err(Error::ShapeMismatch(format!(
            "grid rows do not match {}x{}",
            file.width, file.height
        )));
    }
    Grid::from_vec(file.width, file.height, file.values.concat())
}

#[derive(Serialize)]
struct OwnedPixel {
    row: usize,
    col: usize,
    owner: u32,
    alpha: f64,
}

#[derive(Serialize)]
struct ProvenanceFile {
    format: &'static str,
    version: u32,
    width: u32,
    height: u32,
    epsilon: f64,
    /// Point-index pairs; a disc has equal indices.
    primitives: Vec<(usize, usize)>,
    pixels: Vec<OwnedPixel>,
}

/// Owned pixels only, row-major.
pub fn provenance_to_json(coverage: &Coverage) -> String {
    let w = coverage.config.width as usize;
    let pixels = coverage
        .provenance
        .iter()
        .enumerate()
        .filter_map(|(k, p)| {
            p.owner.map(|owner| OwnedPixel {
                row: k / w,
                col: k % w,
                owner,
                alpha: p.alpha,
            })
        })
        .collect();
    let file = ProvenanceFile {
        format: PROVENANCE_FORMAT,
        version: EXPORT_VERSION,
        width: coverage.config.width,
        height: coverage.config.height,
        epsilon: coverage.config.epsilon,
        primitives: coverage.primitives.iter().map(|p| (p.first, p.second)).collect(),
        pixels,
    };
    serde_json::to_string(&file).expect("provenance serializes")
}

#[derive(Serialize, Deserialize)]
struct AttentionFile {
    format: String,
    version: u32,
    values: Vec<f64>,
}

pub fn attention_to_json(attention: &AttentionSequence) -> String {
    let file = AttentionFile {
        format: ATTENTION_FORMAT.into(),
        version: EXPORT_VERSION,
        values: attention.values().to_vec(),
    };
    serde_json::to_string(&file).expect("attention serializes")
}

pub fn attention_from_json(text: &str) -> Result<AttentionSequence> {
    let file: AttentionFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedLine(e.to_string()))?;
    if file.format != ATTENTION_FORMAT || file.version != EXPORT_VERSION {
        return Err(Error::VersionMismatch {
            kind: ATTENTION_FORMAT,
            found: file.version,
            expected: EXPORT_VERSION,
        });
    }
    if let Some(i) = file.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::MalformedLine(format!("attention value {i} is not finite")));
    }
    Ok(AttentionSequence(file.values))
}
