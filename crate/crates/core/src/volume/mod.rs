//! CT volumes and pseudo-mask sets: in-memory representation, file formats and
//! preprocessing.
//!
//! All tensors are stored row-major with depth slowest, i.e. voxel
//! `(d, h, w)` lives at `(d * H + h) * W + w`. Spacing is `(sz, sy, sx)` in
//! millimeters.

mod manifest;
mod nifti;
mod ops;
mod raw;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_mask_set, load_study, MaskManifest, RegionMaskSet, Study};
pub use nifti::{load_nifti, save_nifti};
pub use ops::{normalize_minmax, resize_volume};
pub use raw::{load_raw_container, save_raw_container, RawHeader};

/// Voxel counts along (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Dims { depth, height, width }
    }

    pub fn voxel_count(&self) -> usize {
        self.depth * self.height * self.width
    }

    pub fn slice_len(&self) -> usize {
        self.height * self.width
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.height + h) * self.width + w
    }
}

impl From<[usize; 3]> for Dims {
    fn from(a: [usize; 3]) -> Self {
        Dims::new(a[0], a[1], a[2])
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        d.as_array()
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.depth, self.height, self.width)
    }
}

/// Millimeters per voxel along (z, y, x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub const UNIT: Spacing = Spacing([1.0, 1.0, 1.0]);

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.0[0] * self.0[1] * self.0[2]
    }

    fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::SchemaViolation(format!(
                "spacing must be finite and positive, got {:?}",
                self.0
            )))
        }
    }

    /// Equality up to float32 header precision.
    pub fn approx_eq(&self, other: &Spacing) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Uint8,
    Int16,
    Float32,
}

impl DType {
    pub fn byte_size(self) -> usize {
        match self {
            DType::Uint8 => 1,
            DType::Int16 => 2,
            DType::Float32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Image,
    Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    Uint8(Vec<u8>),
    Int16(Vec<i16>),
    Float32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::Uint8(v) => v.len(),
            VoxelData::Int16(v) => v.len(),
            VoxelData::Float32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VoxelData::Uint8(_) => DType::Uint8,
            VoxelData::Int16(_) => DType::Int16,
            VoxelData::Float32(_) => DType::Float32,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f32 {
        match self {
            VoxelData::Uint8(v) => v[i] as f32,
            VoxelData::Int16(v) => v[i] as f32,
            VoxelData::Float32(v) => v[i],
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VoxelData::Uint8(v) => v.clone(),
            VoxelData::Int16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VoxelData::Float32(v) => crate::io_util::f32s_to_le_bytes(v),
        }
    }

    /// Decodes exactly `count` little-endian values; `bytes` must hold at
    /// least `count * dtype.byte_size()` bytes.
    pub(crate) fn from_le_bytes(dtype: DType, bytes: &[u8], count: usize) -> VoxelData {
        let bytes = &bytes[..count * dtype.byte_size()];
        match dtype {
            DType::Uint8 => VoxelData::Uint8(bytes.to_vec()),
            DType::Int16 => VoxelData::Int16(
                bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            DType::Float32 => VoxelData::Float32(crate::io_util::f32s_from_le_bytes(bytes)),
        }
    }
}

/// A 3D scalar grid with physical voxel spacing. Carries both CT images and
/// binary masks; mask-kind tensors only ever contain 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeTensor {
    dims: Dims,
    spacing: Spacing,
    kind: VolumeKind,
    data: VoxelData,
}

impl VolumeTensor {
    pub fn new(dims: Dims, spacing: Spacing, kind: VolumeKind, data: VoxelData) -> Result<Self> {
        if data.len() != dims.voxel_count() {
            return Err(Error::DimsMismatch(format!(
                "dims {dims} need {} voxels, data has {}",
                dims.voxel_count(),
                data.len()
            )));
        }
        spacing.validate()?;
        let vol = VolumeTensor {
            dims,
            spacing,
            kind,
            data,
        };
        if kind == VolumeKind::Mask {
            vol.check_binary()?;
        }
        Ok(vol)
    }

    pub fn from_f32(dims: Dims, spacing: Spacing, kind: VolumeKind, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, spacing, kind, VoxelData::Float32(data))
    }

    /// Builds a uint8 mask by evaluating `inside(d, h, w)` at every voxel.
    pub fn mask_from_fn(dims: Dims, spacing: Spacing, mut inside: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.voxel_count());
        for d in 0..dims.depth {
            for h in 0..dims.height {
                for w in 0..dims.width {
                    data.push(u8::from(inside(d, h, w)));
                }
            }
        }
        VolumeTensor::new(dims, spacing, VolumeKind::Mask, VoxelData::Uint8(data))
            .expect("mask_from_fn builds a consistent tensor")
    }

    pub fn empty_mask(dims: Dims, spacing: Spacing) -> Self {
        Self::mask_from_fn(dims, spacing, |_, _, _| false)
    }

    fn check_binary(&self) -> Result<()> {
        for i in 0..self.data.len() {
            let v = self.data.get(i);
            if v != 0.0 && v != 1.0 {
                return Err(Error::NotBinary(v));
            }
        }
        Ok(())
    }

    /// Re-labels this tensor as a mask, validating that it is binary.
    pub fn into_mask(mut self) -> Result<Self> {
        self.check_binary()?;
        self.kind = VolumeKind::Mask;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> f32 {
        self.data.get(i)
    }

    #[inline]
    pub fn at(&self, d: usize, h: usize, w: usize) -> f32 {
        self.data.get(self.dims.index(d, h, w))
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        (0..self.data.len()).map(|i| self.data.get(i)).collect()
    }

    /// Nonzero flags per voxel.
    pub fn positive_flags(&self) -> Vec<bool> {
        (0..self.data.len()).map(|i| self.data.get(i) != 0.0).collect()
    }

    pub fn positive_count(&self) -> usize {
        (0..self.data.len()).filter(|&i| self.data.get(i) != 0.0).count()
    }

    pub fn has_positive(&self) -> bool {
        (0..self.data.len()).any(|i| self.data.get(i) != 0.0)
    }

    /// Number of positive voxels on each slice.
    pub fn slice_positive_counts(&self) -> Vec<usize> {
        let n = self.dims.slice_len();
        (0..self.dims.depth)
            .map(|d| (d * n..(d + 1) * n).filter(|&i| self.data.get(i) != 0.0).count())
            .collect()
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        spacing.validate()?;
        self.spacing = spacing;
        Ok(self)
    }
}

/// Loads a volume from either a raw container header (`.json`) or a NIfTI-1
/// file (`.nii`, `.nii.gz`, `.hdr`).
pub fn load_volume(path: &Path) -> Result<VolumeTensor> {
    let name = path.to_string_lossy().to_ascii_lowercase();
    if name.ends_with(".json") {
        load_raw_container(path)
    } else {
        load_nifti(path)
    }
}
