//! Intensity normalization and axis-aligned resampling.

use rayon::prelude::*;

use super::{Dims, Spacing, VolumeKind, VolumeTensor, VoxelData};
use crate::error::{Error, Result};

/// Per-volume min-max normalization to float32 in `[0, 1]`. A constant volume
/// maps to all zeros.
pub fn normalize_minmax(vol: &VolumeTensor) -> VolumeTensor {
    let n = vol.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = vol.value(i) as f64;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    let data: Vec<f32> = if n == 0 || range.is_nan() || range <= 0.0 {
        vec![0.0; n]
    } else {
        (0..n).map(|i| ((vol.value(i) as f64 - lo) / range) as f32).collect()
    };
    VolumeTensor::from_f32(vol.dims(), vol.spacing(), VolumeKind::Image, data).expect("normalization preserves shape")
}

/// Source sample positions for one output axis under half-pixel-center
/// alignment: `(lower index, upper index, weight of upper)`.
fn linear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Nearest source index for each output index: the source voxel containing
/// the output voxel's center.
fn nearest_taps(input: usize, output: usize) -> Vec<usize> {
    (0..output)
        .map(|i| (((2 * i + 1) * input) / (2 * output)).min(input - 1))
        .collect()
}

/// Resizes to `target` voxels. Images use trilinear interpolation and become
/// float32; masks use nearest neighbour and keep their dtype. Spacing is
/// rescaled so the physical extent is unchanged. An identity target returns
/// the input unchanged.
pub fn resize_volume(vol: &VolumeTensor, target: Dims, kind: VolumeKind) -> Result<VolumeTensor> {
    if target.depth == 0 || target.height == 0 || target.width == 0 {
        return Err(Error::EmptyTarget(target.as_array()));
    }
    let src = vol.dims();
    if src.voxel_count() == 0 {
        return Err(Error::DimsMismatch(format!("cannot resize empty volume {src}")));
    }
    if src == target {
        return Ok(vol.clone());
    }
    let s = vol.spacing().0;
    let spacing = Spacing([
        s[0] * src.depth as f64 / target.depth as f64,
        s[1] * src.height as f64 / target.height as f64,
        s[2] * src.width as f64 / target.width as f64,
    ]);
    let slice = target.slice_len();

    match kind {
        VolumeKind::Mask => {
            let (zd, yd, xd) = (
                nearest_taps(src.depth, target.depth),
                nearest_taps(src.height, target.height),
                nearest_taps(src.width, target.width),
            );
            let pick = |i: usize| {
                let (d, rem) = (i / slice, i % slice);
                src.index(zd[d], yd[rem / target.width], xd[rem % target.width])
            };
            let n = target.voxel_count();
            let data = match vol.data() {
                VoxelData::Uint8(v) => VoxelData::Uint8((0..n).map(|i| v[pick(i)]).collect()),
                VoxelData::Int16(v) => VoxelData::Int16((0..n).map(|i| v[pick(i)]).collect()),
                VoxelData::Float32(v) => VoxelData::Float32((0..n).map(|i| v[pick(i)]).collect()),
            };
            VolumeTensor::new(target, spacing, VolumeKind::Mask, data)
        }
        VolumeKind::Image => {
            let (zt, yt, xt) = (
                linear_taps(src.depth, target.depth),
                linear_taps(src.height, target.height),
                linear_taps(src.width, target.width),
            );
            let mut out = vec![0f32; target.voxel_count()];
            out.par_chunks_mut(slice).enumerate().for_each(|(d, plane)| {
                let (z0, z1, tz) = zt[d];
                for (h, &(y0, y1, ty)) in yt.iter().enumerate() {
                    for (w, &(x0, x1, tx)) in xt.iter().enumerate() {
                        let v = |z, y, x| vol.at(z, y, x) as f64;
                        let c00 = v(z0, y0, x0) * (1.0 - tx) + v(z0, y0, x1) * tx;
                        let c01 = v(z0, y1, x0) * (1.0 - tx) + v(z0, y1, x1) * tx;
                        let c10 = v(z1, y0, x0) * (1.0 - tx) + v(z1, y0, x1) * tx;
                        let c11 = v(z1, y1, x0) * (1.0 - tx) + v(z1, y1, x1) * tx;
                        let c0 = c00 * (1.0 - ty) + c01 * ty;
                        let c1 = c10 * (1.0 - ty) + c11 * ty;
                        plane[h * target.width + w] = (c0 * (1.0 - tz) + c1 * tz) as f32;
                    }
                }
            });
            VolumeTensor::from_f32(target, spacing, VolumeKind::Image, out)
        }
    }
}
