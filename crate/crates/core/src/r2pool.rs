//! Region Representative (R²) token pooling.
//!
//! A volume encoded slice-by-slice yields `D x T` tokens. R² pooling keeps
//! `D` global tokens (one per slice, the mean of its tokens) and `T` region
//! tokens: for each of `s` selected slices, the slice's token grid is
//! adaptively average-pooled down to `T / s` tokens. The result is `D + T`
//! tokens instead of `D * T`.
//!
//! Slices are selected per region as the slice holding the most mask-positive
//! voxels (lowest index on ties, middle slice when the mask is empty).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{FeatureLevel, LevelId, SliceFeatureStack};
use crate::error::{Error, Result};
use crate::grid::{adaptive_window, pooled_grid, Grid};
use crate::io_util;
use crate::region::Region;
use crate::tokens::TokenMatrix;
use crate::volume::{RegionMaskSet, VolumeTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectedSlice {
    pub region: Region,
    pub slice: usize,
}

/// Mean of the `T` tokens of every slice: a `D x C` matrix.
pub fn global_tokens(features: &SliceFeatureStack, level: LevelId) -> Result<TokenMatrix> {
    Ok(global_tokens_of(
        features.level(level)?,
        features.depth(),
        features.channels(),
    ))
}

fn global_tokens_of(level: &FeatureLevel, depth: usize, channels: usize) -> TokenMatrix {
    let t = level.tokens_per_slice();
    let mut out = TokenMatrix::zeros(depth, channels);
    let mut acc = vec![0f64; channels];
    for d in 0..depth {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for k in 0..t {
            for (a, v) in acc.iter_mut().zip(level.token(d, k)) {
                *a += *v as f64;
            }
        }
        for (o, a) in out.row_mut(d).iter_mut().zip(&acc) {
            *o = (a / t as f64) as f32;
        }
    }
    out
}

/// Slice with the most positive voxels; lowest index wins ties and an empty
/// mask falls back to the middle slice `D / 2`.
pub fn select_slice(mask: &VolumeTensor) -> usize {
    let counts = mask.slice_positive_counts();
    let mut best = (0usize, 0usize);
    for (d, &n) in counts.iter().enumerate() {
        if n > best.1 {
            best = (d, n);
        }
    }
    if best.1 == 0 {
        mask.dims().depth / 2
    } else {
        best.0
    }
}

/// One representative slice per region, in canonical region order.
pub fn select_region_slices(masks: &RegionMaskSet) -> Vec<SelectedSlice> {
    masks
        .regions()
        .map(|(region, m)| SelectedSlice {
            region,
            slice: select_slice(m),
        })
        .collect()
}

/// Output of pooling one slice: the pooled grid and its `(T/s) x C` tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledSlice {
    pub grid: Grid,
    pub tokens: TokenMatrix,
}

/// Output grid used when pooling a `grid` slice by `factor`.
pub fn pooled_grid_for(grid: Grid, factor: usize) -> Result<Grid> {
    let t = grid.len();
    if factor == 0 || t % factor != 0 {
        return Err(Error::NonDivisibleFactor { tokens: t, factor });
    }
    Ok(pooled_grid(grid, t / factor))
}

/// Adaptive average pooling of one slice's `T x C` token grid by `factor`.
pub fn adaptive_pool_slice(tokens: &TokenMatrix, grid: Grid, factor: usize) -> Result<PooledSlice> {
    if tokens.rows() != grid.len() {
        return Err(Error::LevelShapeMismatch(format!(
            "{} tokens do not fill grid {grid:?}",
            tokens.rows()
        )));
    }
    let out = pooled_grid_for(grid, factor)?;
    Ok(PooledSlice {
        grid: out,
        tokens: pool_grid(tokens.as_slice(), tokens.cols(), grid, out),
    })
}

fn pool_grid(tokens: &[f32], channels: usize, grid: Grid, out: Grid) -> TokenMatrix {
    let mut pooled = TokenMatrix::zeros(out.len(), channels);
    let mut acc = vec![0f64; channels];
    for oi in 0..out.rows {
        let rows = adaptive_window(oi, grid.rows, out.rows);
        for oj in 0..out.cols {
            let cols = adaptive_window(oj, grid.cols, out.cols);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for i in rows.clone() {
                for j in cols.clone() {
                    let k = i * grid.cols + j;
                    for (a, v) in acc.iter_mut().zip(&tokens[k * channels..(k + 1) * channels]) {
                        *a += *v as f64;
                    }
                }
            }
            let n = (rows.len() * cols.len()) as f64;
            for (o, a) in pooled.row_mut(oi * out.cols + oj).iter_mut().zip(&acc) {
                *o = (a / n) as f32;
            }
        }
    }
    pooled
}

/// Pooled tokens of every selected slice, concatenated in selection order:
/// `T x C` rows when `s = selection.len()` divides `T`.
pub fn region_tokens(features: &SliceFeatureStack, selected: &[SelectedSlice], level: LevelId) -> Result<TokenMatrix> {
    region_tokens_of(features.level(level)?, features.depth(), features.channels(), selected)
}

fn region_tokens_of(
    level: &FeatureLevel,
    depth: usize,
    channels: usize,
    selected: &[SelectedSlice],
) -> Result<TokenMatrix> {
    if selected.is_empty() {
        return Ok(TokenMatrix::zeros(0, channels));
    }
    let out = pooled_grid_for(level.grid, selected.len())?;
    let mut rows = Vec::with_capacity(level.tokens_per_slice() * channels);
    for sel in selected {
        if sel.slice >= depth {
            return Err(Error::DimsMismatch(format!(
                "selected slice {} is outside depth {depth}",
                sel.slice
            )));
        }
        rows.extend(pool_grid(level.slice(sel.slice), channels, level.grid, out).into_vec());
    }
    Ok(TokenMatrix::from_vec(out.len() * selected.len(), channels, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Global,
    Region,
}

/// Where a visual token came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub kind: TokenKind,
    pub slice: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    /// Position within the slice's pooled block (region tokens only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
}

/// The assembled visual tokens: `D` global tokens followed by `T` region
/// tokens, with per-token provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub study_id: String,
    pub level_id: LevelId,
    pub global: TokenMatrix,
    pub region: TokenMatrix,
    pub selected_slices: Vec<SelectedSlice>,
    pub layout: Vec<TokenRecord>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.global.rows() + self.region.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.global.cols()
    }

    /// Token `k` of the concatenated sequence.
    pub fn token(&self, k: usize) -> &[f32] {
        if k < self.global.rows() {
            self.global.row(k)
        } else {
            self.region.row(k - self.global.rows())
        }
    }

    /// Global block stacked over the region block.
    pub fn to_matrix(&self) -> TokenMatrix {
        self.global.vstack(&self.region)
    }

    pub fn with_study_id(mut self, id: impl Into<String>) -> Self {
        self.study_id = id.into();
        self
    }
}

/// Concatenates global and region tokens (global first).
pub fn assemble_visual_tokens(
    global: TokenMatrix,
    region: TokenMatrix,
    selection: &[SelectedSlice],
    level_id: LevelId,
) -> Result<TokenSequence> {
    if region.rows() > 0 && region.cols() != global.cols() {
        return Err(Error::ChannelMismatch(global.cols(), region.cols()));
    }
    let region = if region.rows() == 0 {
        TokenMatrix::zeros(0, global.cols())
    } else {
        region
    };
    let per_slice = match selection.len() {
        0 if region.rows() == 0 => 0,
        0 => {
            return Err(Error::InvalidConfig(format!(
                "{} region tokens but no selected slices",
                region.rows()
            )))
        }
        s if region.rows() % s != 0 => {
            return Err(Error::NonDivisibleFactor {
                tokens: region.rows(),
                factor: s,
            })
        }
        s => region.rows() / s,
    };
    let mut layout: Vec<TokenRecord> = (0..global.rows())
        .map(|d| TokenRecord {
            kind: TokenKind::Global,
            slice: d,
            region: None,
            cell: None,
        })
        .collect();
    for sel in selection {
        layout.extend((0..per_slice).map(|cell| TokenRecord {
            kind: TokenKind::Region,
            slice: sel.slice,
            region: Some(sel.region),
            cell: Some(cell),
        }));
    }
    Ok(TokenSequence {
        study_id: String::new(),
        level_id,
        global,
        region,
        selected_slices: selection.to_vec(),
        layout,
    })
}

/// Global and region tokens of one level, assembled.
pub fn r2_pool(features: &SliceFeatureStack, selection: &[SelectedSlice], level: LevelId) -> Result<TokenSequence> {
    let lvl = features.level(level)?;
    let glob = global_tokens_of(lvl, features.depth(), features.channels());
    let reg = region_tokens_of(lvl, features.depth(), features.channels(), selection)?;
    assemble_visual_tokens(glob, reg, selection, level)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutSidecar {
    study_id: String,
    level_id: LevelId,
    global_count: usize,
    region_count: usize,
    selected_slices: Vec<SelectedSlice>,
    records: Vec<TokenRecord>,
}

fn layout_path(header_path: &Path) -> std::path::PathBuf {
    io_util::sibling_with_suffix(header_path, "layout.json")
}

/// Saves the sequence in the feature container format (a single slice of
/// `D + T` tokens) plus a `<stem>.layout.json` provenance sidecar.
pub fn save_token_sequence(seq: &TokenSequence, header_path: &Path) -> Result<()> {
    let n = seq.len();
    let level = FeatureLevel::new(
        seq.level_id,
        Grid::new(1, n),
        1,
        seq.channels(),
        seq.to_matrix().into_vec(),
    )?;
    crate::encoder::save_features(&SliceFeatureStack::new(vec![level])?, header_path)?;
    io_util::write_json(
        &layout_path(header_path),
        &LayoutSidecar {
            study_id: seq.study_id.clone(),
            level_id: seq.level_id,
            global_count: seq.global.rows(),
            region_count: seq.region.rows(),
            selected_slices: seq.selected_slices.clone(),
            records: seq.layout.clone(),
        },
    )
}

pub fn load_token_sequence(header_path: &Path) -> Result<TokenSequence> {
    let stack = crate::encoder::load_precomputed_features(header_path)?;
    let side: LayoutSidecar = io_util::read_json(&layout_path(header_path))?;
    let level = stack.final_level();
    let (g, r, c) = (side.global_count, side.region_count, stack.channels());
    if stack.depth() != 1 || level.tokens_per_slice() != g + r || side.records.len() != g + r {
        return Err(Error::SchemaViolation(format!(
            "{}: token counts do not match layout ({g} + {r})",
            header_path.display()
        )));
    }
    let data = level.as_slice();
    Ok(TokenSequence {
        study_id: side.study_id,
        level_id: side.level_id,
        global: TokenMatrix::from_vec(g, c, data[..g * c].to_vec()),
        region: TokenMatrix::from_vec(r, c, data[g * c..].to_vec()),
        selected_slices: side.selected_slices,
        layout: side.records,
    })
}
