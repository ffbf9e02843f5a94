//! Per-slice, multi-level visual token grids.
//!
//! A [`SliceFeatureStack`] is the substrate for all pooling: for each feature
//! level it holds `D x T x C` float32 tokens laid out (slice, token, channel).
//! Stacks come either from [`stub_encode_volume`], a deterministic stand-in for
//! a frozen 2D encoder, or from a feature container exported by a real encoder
//! ([`load_precomputed_features`]).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{adaptive_window, Grid};
use crate::io_util;
use crate::volume::VolumeTensor;

pub type LevelId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLevel {
    pub level_id: LevelId,
    pub grid: Grid,
    depth: usize,
    channels: usize,
    tokens: Vec<f32>,
}

impl FeatureLevel {
    pub fn new(level_id: LevelId, grid: Grid, depth: usize, channels: usize, tokens: Vec<f32>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::LevelShapeMismatch(format!(
                "level {level_id} has empty grid {grid:?}"
            )));
        }
        if tokens.len() != depth * grid.len() * channels {
            return Err(Error::LevelShapeMismatch(format!(
                "level {level_id} holds {} values, expected {depth}x{}x{channels}",
                tokens.len(),
                grid.len()
            )));
        }
        Ok(FeatureLevel {
            level_id,
            grid,
            depth,
            channels,
            tokens,
        })
    }

    pub fn tokens_per_slice(&self) -> usize {
        self.grid.len()
    }

    /// All `T x C` values of slice `d`.
    pub fn slice(&self, d: usize) -> &[f32] {
        let n = self.grid.len() * self.channels;
        &self.tokens[d * n..(d + 1) * n]
    }

    pub fn token(&self, d: usize, t: usize) -> &[f32] {
        let c = self.channels;
        &self.slice(d)[t * c..(t + 1) * c]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.tokens
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceFeatureStack {
    depth: usize,
    tokens_per_slice: usize,
    channels: usize,
    levels: Vec<FeatureLevel>,
}

impl SliceFeatureStack {
    pub fn new(levels: Vec<FeatureLevel>) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::LevelShapeMismatch("stack has no levels".into()))?;
        let (depth, t, c) = (first.depth, first.tokens_per_slice(), first.channels);
        for l in &levels {
            if (l.depth, l.tokens_per_slice(), l.channels) != (depth, t, c) {
                return Err(Error::LevelShapeMismatch(format!(
                    "level {} is {}x{}x{}, level {} is {depth}x{t}x{c}",
                    l.level_id,
                    l.depth,
                    l.tokens_per_slice(),
                    l.channels,
                    first.level_id
                )));
            }
        }
        for (i, l) in levels.iter().enumerate() {
            if levels[..i].iter().any(|o| o.level_id == l.level_id) {
                return Err(Error::LevelShapeMismatch(format!("duplicate level id {}", l.level_id)));
            }
        }
        Ok(SliceFeatureStack {
            depth,
            tokens_per_slice: t,
            channels: c,
            levels,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tokens_per_slice(&self) -> usize {
        self.tokens_per_slice
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn level_ids(&self) -> Vec<LevelId> {
        self.levels.iter().map(|l| l.level_id).collect()
    }

    pub fn level(&self, id: LevelId) -> Result<&FeatureLevel> {
        self.levels
            .iter()
            .find(|l| l.level_id == id)
            .ok_or(Error::UnknownLevel(id))
    }

    /// The deepest (last listed) level, used for visual tokens.
    pub fn final_level(&self) -> &FeatureLevel {
        self.levels.last().expect("stack has at least one level")
    }
}

/// Stub encoder settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StubEncoderConfig {
    pub grid: Grid,
    pub channels: usize,
    pub level_ids: Vec<LevelId>,
}

impl Default for StubEncoderConfig {
    fn default() -> Self {
        StubEncoderConfig {
            grid: Grid::new(18, 18),
            channels: 64,
            level_ids: vec![3, 6, 9, 12],
        }
    }
}

fn positional(coords: [f64; 4], channel: usize, channels: usize) -> f32 {
    let m = channel - 2;
    let coord = coords[m % 4];
    let k = m / 4;
    let bands = (channels - 2).div_ceil(8).max(1) as f64;
    let freq = 10000f64.powf(-((k / 2) as f64) / bands);
    let v = if k % 2 == 0 {
        (coord * freq).sin()
    } else {
        (coord * freq).cos()
    };
    v as f32
}

/// Deterministic stand-in for a frozen slice encoder.
///
/// Slice pixels are partitioned into `grid` patches with the adaptive window
/// rule. Channel 0 is the patch mean, channel 1 the patch (population)
/// standard deviation, and channels 2.. are sinusoidal encodings of
/// `(slice, row, col, level_id)`.
pub fn stub_encode_volume(vol: &VolumeTensor, cfg: &StubEncoderConfig) -> Result<SliceFeatureStack> {
    let dims = vol.dims();
    let grid = cfg.grid;
    if grid.rows == 0 || grid.cols == 0 || grid.rows > dims.height || grid.cols > dims.width {
        return Err(Error::GridTooFine {
            grid: (grid.rows, grid.cols),
            height: dims.height,
            width: dims.width,
        });
    }
    if cfg.channels < 2 {
        return Err(Error::InvalidConfig(format!(
            "stub encoder needs at least 2 channels, got {}",
            cfg.channels
        )));
    }
    if cfg.level_ids.is_empty() {
        return Err(Error::InvalidConfig("at least one level id is required".into()));
    }
    for i in 0..vol.len() {
        let v = vol.value(i);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::NotNormalized(v));
        }
    }

    let (t, c) = (grid.len(), cfg.channels);
    // Intensity statistics do not depend on the level.
    let mut stats = vec![(0f32, 0f32); dims.depth * t];
    stats.par_chunks_mut(t).enumerate().for_each(|(d, out)| {
        for i in 0..grid.rows {
            let rows = adaptive_window(i, dims.height, grid.rows);
            for j in 0..grid.cols {
                let cols = adaptive_window(j, dims.width, grid.cols);
                let n = (rows.len() * cols.len()) as f64;
                let mut sum = 0f64;
                for h in rows.clone() {
                    for w in cols.clone() {
                        sum += vol.at(d, h, w) as f64;
                    }
                }
                // Deviations are taken from the rounded mean so constant
                // patches give exactly zero spread.
                let mean = (sum / n) as f32;
                let mut sq = 0f64;
                for h in rows.clone() {
                    for w in cols.clone() {
                        let dev = vol.at(d, h, w) as f64 - mean as f64;
                        sq += dev * dev;
                    }
                }
                out[i * grid.cols + j] = (mean, (sq / n).sqrt() as f32);
            }
        }
    });

    let levels = cfg
        .level_ids
        .iter()
        .map(|&level_id| {
            let mut tokens = vec![0f32; dims.depth * t * c];
            tokens.par_chunks_mut(t * c).enumerate().for_each(|(d, slice)| {
                for (k, tok) in slice.chunks_exact_mut(c).enumerate() {
                    let (mean, std) = stats[d * t + k];
                    tok[0] = mean;
                    tok[1] = std;
                    let coords = [
                        d as f64,
                        (k / grid.cols) as f64,
                        (k % grid.cols) as f64,
                        level_id as f64,
                    ];
                    for (ch, v) in tok.iter_mut().enumerate().skip(2) {
                        *v = positional(coords, ch, c);
                    }
                }
            });
            FeatureLevel::new(level_id, grid, dims.depth, c, tokens)
        })
        .collect::<Result<Vec<_>>>()?;
    SliceFeatureStack::new(levels)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerLevel {
    id: LevelId,
    grid: Grid,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerHeader {
    #[serde(rename = "D")]
    depth: usize,
    #[serde(rename = "T")]
    tokens: usize,
    #[serde(rename = "C")]
    channels: usize,
    levels: Vec<ContainerLevel>,
}

/// Blob file holding one level: `<stem>.level-<id>.bin` next to the header.
pub fn level_blob_path(header_path: &Path, id: LevelId) -> std::path::PathBuf {
    io_util::sibling_with_suffix(header_path, &format!("level-{id}.bin"))
}

/// Writes a feature container: JSON header plus one little-endian float32
/// blob per level, each laid out (slice, token, channel).
pub fn save_features(stack: &SliceFeatureStack, header_path: &Path) -> Result<()> {
    let header = ContainerHeader {
        depth: stack.depth,
        tokens: stack.tokens_per_slice,
        channels: stack.channels,
        levels: stack
            .levels
            .iter()
            .map(|l| ContainerLevel {
                id: l.level_id,
                grid: l.grid,
            })
            .collect(),
    };
    for l in &stack.levels {
        io_util::write_atomic(
            &level_blob_path(header_path, l.level_id),
            &io_util::f32s_to_le_bytes(&l.tokens),
        )?;
    }
    io_util::write_json(header_path, &header)
}

pub fn load_precomputed_features(header_path: &Path) -> Result<SliceFeatureStack> {
    let header: ContainerHeader = io_util::read_json(header_path)?;
    if header.levels.is_empty() || header.depth == 0 || header.channels == 0 {
        return Err(Error::SchemaViolation(format!(
            "{}: D, C and levels must be non-empty",
            header_path.display()
        )));
    }
    let levels = header
        .levels
        .iter()
        .map(|l| {
            if l.grid.len() != header.tokens {
                return Err(Error::LevelShapeMismatch(format!(
                    "level {} grid {:?} does not hold T={} tokens",
                    l.id, l.grid, header.tokens
                )));
            }
            let bytes = io_util::read(&level_blob_path(header_path, l.id))?;
            let expected = header.depth * header.tokens * header.channels * 4;
            if bytes.len() != expected {
                return Err(Error::LevelShapeMismatch(format!(
                    "level {} blob holds {} bytes, expected {expected}",
                    l.id,
                    bytes.len()
                )));
            }
            FeatureLevel::new(
                l.id,
                l.grid,
                header.depth,
                header.channels,
                io_util::f32s_from_le_bytes(&bytes),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SliceFeatureStack::new(levels)
}
