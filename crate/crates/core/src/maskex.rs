//! Mask-driven visual extractor: two segmentation tokens per region mask.
//!
//! The *mask token* pools the multi-level R² visual tokens with weights equal
//! to the fraction of each token's image area covered by the mask, then
//! projects the concatenated per-level vectors to `C`. The *spatial token*
//! downsamples the mask to a fixed grid, flattens it and projects it to `C`.
//! Every region always contributes both tokens, in canonical order, whether
//! or not its mask has any positive voxel.

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{LevelId, SliceFeatureStack};
use crate::error::{Error, Result};
use crate::grid::{adaptive_window, Grid};
use crate::io_util;
use crate::r2pool::{pooled_grid_for, r2_pool, SelectedSlice, TokenSequence};
use crate::region::Region;
use crate::volume::{Dims, RegionMaskSet, VolumeTensor};

/// Default spatial-token grid `(depth, height, width)`; 2048 cells.
pub const DEFAULT_SPATIAL_GRID: Dims = Dims::new(8, 16, 16);

/// Untrained linear projections for mask and spatial tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionWeights {
    pub level_ids: Vec<LevelId>,
    pub channels: usize,
    pub spatial_grid: Dims,
    pub seed: u64,
    /// `C x (L*C)`, row-major.
    mask_w: Vec<f32>,
    mask_b: Vec<f32>,
    /// `C x G`, row-major.
    spatial_w: Vec<f32>,
    spatial_b: Vec<f32>,
}

fn affine(w: &[f32], b: &[f32], x: &[f32]) -> Vec<f32> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let row = &w[r * n..(r + 1) * n];
            let mut acc = *bias as f64;
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi as f64 * *xi as f64;
            }
            acc as f32
        })
        .collect()
}

impl ProjectionWeights {
    /// Pseudo-random weights drawn uniformly from `±1/sqrt(fan_in)` with a
    /// ChaCha8 stream, in the order mask matrix, mask bias, spatial matrix,
    /// spatial bias.
    pub fn seeded(level_ids: Vec<LevelId>, channels: usize, spatial_grid: Dims, seed: u64) -> Result<Self> {
        if level_ids.is_empty() || channels == 0 || spatial_grid.voxel_count() == 0 {
            return Err(Error::InvalidConfig(
                "projection weights need levels, channels and a non-empty spatial grid".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f32> {
            let bound = 1.0 / (fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        let (l, c, g) = (level_ids.len(), channels, spatial_grid.voxel_count());
        let mask_w = draw(c * l * c, l * c);
        let mask_b = draw(c, l * c);
        let spatial_w = draw(c * g, g);
        let spatial_b = draw(c, g);
        Ok(ProjectionWeights {
            level_ids,
            channels,
            spatial_grid,
            seed,
            mask_w,
            mask_b,
            spatial_w,
            spatial_b,
        })
    }

    pub fn from_parts(
        level_ids: Vec<LevelId>,
        channels: usize,
        spatial_grid: Dims,
        seed: u64,
        mask: (Vec<f32>, Vec<f32>),
        spatial: (Vec<f32>, Vec<f32>),
    ) -> Result<Self> {
        let (l, c, g) = (level_ids.len(), channels, spatial_grid.voxel_count());
        let shapes = [
            (mask.0.len(), c * l * c, "mask matrix"),
            (mask.1.len(), c, "mask bias"),
            (spatial.0.len(), c * g, "spatial matrix"),
            (spatial.1.len(), c, "spatial bias"),
        ];
        for (got, want, what) in shapes {
            if got != want {
                return Err(Error::SchemaViolation(format!(
                    "{what} holds {got} values, expected {want}"
                )));
            }
        }
        Ok(ProjectionWeights {
            level_ids,
            channels,
            spatial_grid,
            seed,
            mask_w: mask.0,
            mask_b: mask.1,
            spatial_w: spatial.0,
            spatial_b: spatial.1,
        })
    }

    pub fn mask_matrix(&self) -> &[f32] {
        &self.mask_w
    }

    pub fn mask_bias(&self) -> &[f32] {
        &self.mask_b
    }

    pub fn spatial_matrix(&self) -> &[f32] {
        &self.spatial_w
    }

    pub fn spatial_bias(&self) -> &[f32] {
        &self.spatial_b
    }

    pub fn project_mask(&self, pooled: &[f32]) -> Vec<f32> {
        assert_eq!(pooled.len(), self.level_ids.len() * self.channels);
        affine(&self.mask_w, &self.mask_b, pooled)
    }

    pub fn project_spatial(&self, flat: &[f32]) -> Vec<f32> {
        assert_eq!(flat.len(), self.spatial_grid.voxel_count());
        affine(&self.spatial_w, &self.spatial_b, flat)
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (mask matrix, mask
    /// bias, spatial matrix, spatial bias as little-endian float32).
    pub fn save(&self, header_path: &Path) -> Result<()> {
        let header = WeightsHeader {
            levels: self.level_ids.len(),
            channels: self.channels,
            cells: self.spatial_grid.voxel_count(),
            seed: self.seed,
            level_ids: self.level_ids.clone(),
            spatial_grid: self.spatial_grid,
        };
        let mut blob = io_util::f32s_to_le_bytes(&self.mask_w);
        for part in [&self.mask_b, &self.spatial_w, &self.spatial_b] {
            blob.extend(io_util::f32s_to_le_bytes(part));
        }
        io_util::write_atomic(&io_util::sibling_with_suffix(header_path, "bin"), &blob)?;
        io_util::write_json(header_path, &header)
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let h: WeightsHeader = io_util::read_json(header_path)?;
        if h.level_ids.len() != h.levels || h.spatial_grid.voxel_count() != h.cells {
            return Err(Error::SchemaViolation(format!(
                "{}: L/G disagree with level_ids/spatial_grid",
                header_path.display()
            )));
        }
        let values = io_util::f32s_from_le_bytes(&io_util::read(&io_util::sibling_with_suffix(header_path, "bin"))?);
        let (l, c, g) = (h.levels, h.channels, h.cells);
        let sizes = [c * l * c, c, c * g, c];
        if values.len() != sizes.iter().sum::<usize>() {
            return Err(Error::SchemaViolation(format!(
                "{}: weight blob holds {} values, expected {}",
                header_path.display(),
                values.len(),
                sizes.iter().sum::<usize>()
            )));
        }
        let mut parts = Vec::new();
        let mut at = 0;
        for n in sizes {
            parts.push(values[at..at + n].to_vec());
            at += n;
        }
        let spatial_b = parts.pop().unwrap();
        let spatial_w = parts.pop().unwrap();
        let mask_b = parts.pop().unwrap();
        let mask_w = parts.pop().unwrap();
        Self::from_parts(
            h.level_ids,
            c,
            h.spatial_grid,
            h.seed,
            (mask_w, mask_b),
            (spatial_w, spatial_b),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsHeader {
    #[serde(rename = "L")]
    levels: usize,
    #[serde(rename = "C")]
    channels: usize,
    #[serde(rename = "G")]
    cells: usize,
    seed: u64,
    level_ids: Vec<LevelId>,
    spatial_grid: Dims,
}

/// Per-level coverage fractions aligned 1:1 with the `D + T` R²-pooled tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskFractions {
    pub selection: Vec<SelectedSlice>,
    pub levels: Vec<(LevelId, Vec<f32>)>,
}

/// Positive-voxel prefix sums of one slice, `(H+1) x (W+1)`.
struct SlicePrefix {
    width: usize,
    sums: Vec<u32>,
}

impl SlicePrefix {
    fn new(mask: &VolumeTensor, d: usize) -> Self {
        let dims = mask.dims();
        let w1 = dims.width + 1;
        let mut sums = vec![0u32; (dims.height + 1) * w1];
        for h in 0..dims.height {
            let mut row = 0u32;
            for w in 0..dims.width {
                row += u32::from(mask.at(d, h, w) != 0.0);
                sums[(h + 1) * w1 + w + 1] = sums[h * w1 + w + 1] + row;
            }
        }
        SlicePrefix {
            width: dims.width,
            sums,
        }
    }

    fn count(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> u32 {
        let w1 = self.width + 1;
        let at = |h: usize, w: usize| self.sums[h * w1 + w];
        at(rows.end, cols.end) + at(rows.start, cols.start) - at(rows.start, cols.end) - at(rows.end, cols.start)
    }
}

/// Pixel range covered by token rows (or columns) `tokens` when `pixels`
/// pixels are split into `cells` patches with the adaptive window rule.
fn pixel_span(tokens: std::ops::Range<usize>, pixels: usize, cells: usize) -> std::ops::Range<usize> {
    tokens.start * pixels / cells..(tokens.end * pixels).div_ceil(cells)
}

/// Coverage fractions of `mask` over the `D + T` R² tokens of every level.
///
/// Global token `d` gets the positive fraction of slice `d`; region token
/// `k` of a selected slice gets the positive fraction of the image area under
/// the token window that was pooled into it.
pub fn pool_mask_r2(
    mask: &VolumeTensor,
    grids: &[(LevelId, Grid)],
    selection: &[SelectedSlice],
) -> Result<MaskFractions> {
    let dims = mask.dims();
    let area = dims.slice_len() as f64;
    let slice_counts = mask.slice_positive_counts();
    let mut prefixes: Vec<(usize, SlicePrefix)> = Vec::new();
    for sel in selection {
        if sel.slice >= dims.depth {
            return Err(Error::DimsMismatch(format!(
                "selected slice {} is outside mask depth {}",
                sel.slice, dims.depth
            )));
        }
        if !prefixes.iter().any(|(d, _)| *d == sel.slice) {
            prefixes.push((sel.slice, SlicePrefix::new(mask, sel.slice)));
        }
    }

    let levels = grids
        .iter()
        .map(|&(level_id, grid)| {
            if grid.rows > dims.height || grid.cols > dims.width {
                return Err(Error::DimsMismatch(format!(
                    "level {level_id} grid {grid:?} is finer than mask slices {}x{}",
                    dims.height, dims.width
                )));
            }
            let mut values: Vec<f32> = slice_counts.iter().map(|&n| (n as f64 / area) as f32).collect();
            if !selection.is_empty() {
                let out = pooled_grid_for(grid, selection.len())?;
                for sel in selection {
                    let prefix = &prefixes.iter().find(|(d, _)| *d == sel.slice).unwrap().1;
                    for oi in 0..out.rows {
                        let rows = pixel_span(adaptive_window(oi, grid.rows, out.rows), dims.height, grid.rows);
                        for oj in 0..out.cols {
                            let cols = pixel_span(adaptive_window(oj, grid.cols, out.cols), dims.width, grid.cols);
                            let n = (rows.len() * cols.len()) as f64;
                            values.push((prefix.count(rows.clone(), cols) as f64 / n) as f32);
                        }
                    }
                }
            }
            Ok((level_id, values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskFractions {
        selection: selection.to_vec(),
        levels,
    })
}

/// `(level id, grid)` of every level in a stack.
pub fn level_grids(features: &SliceFeatureStack) -> Vec<(LevelId, Grid)> {
    features.levels().iter().map(|l| (l.level_id, l.grid)).collect()
}

/// R²-pooled tokens of each projection level, in weight order.
pub fn pooled_levels(
    features: &SliceFeatureStack,
    selection: &[SelectedSlice],
    level_ids: &[LevelId],
) -> Result<Vec<TokenSequence>> {
    level_ids.iter().map(|&l| r2_pool(features, selection, l)).collect()
}

/// Fraction-weighted mean of each level's pooled tokens, concatenated over
/// levels (the mask-token input before projection). A level whose fractions
/// sum to zero contributes a zero vector.
pub fn pooled_mask_features(pooled: &[TokenSequence], fractions: &MaskFractions) -> Result<Vec<f32>> {
    if pooled.len() != fractions.levels.len() {
        return Err(Error::LevelMismatch(format!(
            "{} pooled levels vs {} fraction levels",
            pooled.len(),
            fractions.levels.len()
        )));
    }
    let mut out = Vec::new();
    for (seq, (level_id, fr)) in pooled.iter().zip(&fractions.levels) {
        if seq.level_id != *level_id {
            return Err(Error::LevelMismatch(format!(
                "pooled level {} paired with fractions for level {level_id}",
                seq.level_id
            )));
        }
        if fr.len() != seq.len() {
            return Err(Error::LevelMismatch(format!(
                "level {level_id}: {} fractions for {} tokens",
                fr.len(),
                seq.len()
            )));
        }
        let c = seq.channels();
        let mut acc = vec![0f64; c];
        let mut total = 0f64;
        for (k, &f) in fr.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            total += f as f64;
            for (a, v) in acc.iter_mut().zip(seq.token(k)) {
                *a += f as f64 * *v as f64;
            }
        }
        if total > 0.0 {
            out.extend(acc.iter().map(|a| (a / total) as f32));
        } else {
            out.extend(std::iter::repeat(0.0).take(c));
        }
    }
    Ok(out)
}

fn check_weights(features: &SliceFeatureStack, weights: &ProjectionWeights) -> Result<()> {
    if weights.channels != features.channels() {
        return Err(Error::ChannelMismatch(features.channels(), weights.channels));
    }
    for &l in &weights.level_ids {
        if features.level(l).is_err() {
            return Err(Error::LevelMismatch(format!(
                "projection level {l} not present in features {:?}",
                features.level_ids()
            )));
        }
    }
    Ok(())
}

/// Mask token: fraction-weighted pooling at every projection level followed
/// by the mask projection.
pub fn mask_token(
    features: &SliceFeatureStack,
    fractions: &MaskFractions,
    weights: &ProjectionWeights,
) -> Result<Vec<f32>> {
    check_weights(features, weights)?;
    let ids: Vec<LevelId> = fractions.levels.iter().map(|(l, _)| *l).collect();
    if ids != weights.level_ids {
        return Err(Error::LevelMismatch(format!(
            "fractions cover levels {ids:?}, weights expect {:?}",
            weights.level_ids
        )));
    }
    let pooled = pooled_levels(features, &fractions.selection, &weights.level_ids)?;
    Ok(weights.project_mask(&pooled_mask_features(&pooled, fractions)?))
}

/// Mask downsampled to `grid`: a cell is 1 when at least half of the voxels
/// in its adaptive window are positive. Flattened row-major.
pub fn downsample_mask(mask: &VolumeTensor, grid: Dims) -> Vec<f32> {
    let dims = mask.dims();
    let mut out = Vec::with_capacity(grid.voxel_count());
    for gd in 0..grid.depth {
        let zs = adaptive_window(gd, dims.depth, grid.depth);
        for gh in 0..grid.height {
            let ys = adaptive_window(gh, dims.height, grid.height);
            for gw in 0..grid.width {
                let xs = adaptive_window(gw, dims.width, grid.width);
                let mut pos = 0usize;
                for z in zs.clone() {
                    for y in ys.clone() {
                        for x in xs.clone() {
                            pos += usize::from(mask.at(z, y, x) != 0.0);
                        }
                    }
                }
                let n = zs.len() * ys.len() * xs.len();
                out.push(if 2 * pos >= n { 1.0 } else { 0.0 });
            }
        }
    }
    out
}

/// Spatial token: downsampled, flattened mask through the spatial projection.
pub fn spatial_token(mask: &VolumeTensor, weights: &ProjectionWeights) -> Vec<f32> {
    weights.project_spatial(&downsample_mask(mask, weights.spatial_grid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegTokenEntry {
    pub region: Region,
    pub positive: bool,
    pub mask_token: Vec<f32>,
    pub spatial_token: Vec<f32>,
}

/// Two tokens per canonical region, always six entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationTokenSet {
    pub study_id: String,
    pub entries: Vec<SegTokenEntry>,
}

impl SegmentationTokenSet {
    pub fn token_count(&self) -> usize {
        2 * self.entries.len()
    }

    pub fn entry(&self, r: Region) -> &SegTokenEntry {
        &self.entries[r.index()]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: SegmentationTokenSet = io_util::read_json(path)?;
        let regions: Vec<Region> = set.entries.iter().map(|e| e.region).collect();
        if regions != Region::ALL {
            return Err(Error::SchemaViolation(format!(
                "{}: segmentation tokens must list regions 1..6 in order",
                path.display()
            )));
        }
        Ok(set)
    }
}

/// Segmentation tokens for all six regions of a study.
pub fn segmentation_tokens(
    masks: &RegionMaskSet,
    features: &SliceFeatureStack,
    selection: &[SelectedSlice],
    weights: &ProjectionWeights,
) -> Result<SegmentationTokenSet> {
    check_weights(features, weights)?;
    if masks.dims().depth != features.depth() {
        return Err(Error::DimsMismatch(format!(
            "masks have {} slices, features {}",
            masks.dims().depth,
            features.depth()
        )));
    }
    let pooled = pooled_levels(features, selection, &weights.level_ids)?;
    let grids: Vec<(LevelId, Grid)> = weights
        .level_ids
        .iter()
        .map(|&l| features.level(l).map(|lvl| (l, lvl.grid)))
        .collect::<Result<_>>()?;
    let entries = Region::ALL
        .par_iter()
        .map(|&region| {
            let mask = masks.region(region);
            let fractions = pool_mask_r2(mask, &grids, selection)?;
            let pre = pooled_mask_features(&pooled, &fractions)?;
            Ok(SegTokenEntry {
                region,
                positive: mask.has_positive(),
                mask_token: weights.project_mask(&pre),
                spatial_token: spatial_token(mask, weights),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentationTokenSet {
        study_id: String::new(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::FeatureLevel;
    use crate::volume::Spacing;

    fn weights(levels: Vec<LevelId>, c: usize, grid: Dims) -> ProjectionWeights {
        ProjectionWeights::seeded(levels, c, grid, 7).unwrap()
    }

    fn sel(slices: &[usize]) -> Vec<SelectedSlice> {
        slices
            .iter()
            .enumerate()
            .map(|(i, &slice)| SelectedSlice {
                region: Region::ALL[i % 6],
                slice,
            })
            .collect()
    }

    #[test]
    fn full_and_empty_coverage() {
        let dims = Dims::new(3, 8, 8);
        let grids = [(1, Grid::new(2, 2)), (2, Grid::new(4, 1))];
        let full = VolumeTensor::mask_from_fn(dims, Spacing::UNIT, |_, _, _| true);
        let fr = pool_mask_r2(&full, &grids, &sel(&[0, 2])).unwrap();
        for (_, v) in &fr.levels {
            assert_eq!(v.len(), 3 + 4);
            assert!(v.iter().all(|x| *x == 1.0));
        }
        let empty = VolumeTensor::empty_mask(dims, Spacing::UNIT);
        let fr = pool_mask_r2(&empty, &grids, &sel(&[0, 2])).unwrap();
        assert!(fr.levels.iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn top_half_fractions() {
        let dims = Dims::new(2, 4, 4);
        let top = VolumeTensor::mask_from_fn(dims, Spacing::UNIT, |_, h, _| h < 2);
        let fr = pool_mask_r2(&top, &[(0, Grid::new(2, 2))], &sel(&[1])).unwrap();
        assert_eq!(fr.levels[0].1, vec![0.5, 0.5, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_bias_on_zero_input() {
        let w = weights(vec![1, 2], 3, Dims::new(2, 2, 2));
        assert_eq!(w.project_mask(&[0.0; 6]), w.mask_bias());
        let empty = VolumeTensor::empty_mask(Dims::new(4, 4, 4), Spacing::UNIT);
        assert_eq!(spatial_token(&empty, &w), w.spatial_bias());
    }

    #[test]
    fn full_mask_spatial_is_ones_projection() {
        let w = weights(vec![1], 4, Dims::new(2, 2, 2));
        let full = VolumeTensor::mask_from_fn(Dims::new(4, 6, 6), Spacing::UNIT, |_, _, _| true);
        assert_eq!(downsample_mask(&full, w.spatial_grid), vec![1.0; 8]);
        assert_eq!(spatial_token(&full, &w), w.project_spatial(&[1.0; 8]));
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        let a = weights(vec![3, 6], 4, Dims::new(2, 2, 2));
        let b = weights(vec![3, 6], 4, Dims::new(2, 2, 2));
        assert_eq!(a, b);
        let c = ProjectionWeights::seeded(vec![3, 6], 4, Dims::new(2, 2, 2), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = weights(vec![3, 6, 9], 5, Dims::new(2, 3, 4));
        let p = dir.path().join("w.json");
        w.save(&p).unwrap();
        assert_eq!(ProjectionWeights::load(&p).unwrap(), w);
    }

    fn tiny_stack() -> SliceFeatureStack {
        let lv = |id: LevelId| {
            let data = (0..2 * 4 * 3).map(|i| (i as f32 * 0.37 + id as f32).sin()).collect();
            FeatureLevel::new(id, Grid::new(2, 2), 2, 3, data).unwrap()
        };
        SliceFeatureStack::new(vec![lv(1), lv(2)]).unwrap()
    }

    #[test]
    fn level_mismatch() {
        let stack = tiny_stack();
        let w = weights(vec![1, 2], 3, Dims::new(1, 1, 1));
        let fr = MaskFractions {
            selection: vec![],
            levels: vec![(2, vec![0.0; 2]), (1, vec![0.0; 2])],
        };
        assert!(matches!(mask_token(&stack, &fr, &w), Err(Error::LevelMismatch(_))));
        let w3 = weights(vec![1, 5], 3, Dims::new(1, 1, 1));
        assert!(matches!(mask_token(&stack, &fr, &w3), Err(Error::LevelMismatch(_))));
    }

    #[test]
    fn empty_mask_token_is_bias() {
        let stack = tiny_stack();
        let w = weights(vec![1, 2], 3, Dims::new(1, 1, 1));
        let fr = MaskFractions {
            selection: vec![],
            levels: vec![(1, vec![0.0; 2]), (2, vec![0.0; 2])],
        };
        assert_eq!(mask_token(&stack, &fr, &w).unwrap(), w.mask_bias());
    }
}
