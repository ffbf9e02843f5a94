//! Minimal NIfTI-1 reader/writer for 3D scalar volumes.
//!
//! Supports single-file (`n+1`) and header/image pair (`ni1`) layouts, either
//! byte order, gzip-compressed input, and datatypes uint8, int16 and float32.
//! NIfTI stores x fastest, then y, then z, which is exactly the depth-slowest
//! `(D, H, W)` order used internally with `D = dim[3]`, `H = dim[2]`,
//! `W = dim[1]`; no reordering of the payload is needed.

use std::io::Read;
use std::path::{Path, PathBuf};

use super::{DType, Dims, Spacing, VolumeKind, VolumeTensor, VoxelData};
use crate::error::{Error, Result};
use crate::io_util;

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = [
            self.bytes[off],
            self.bytes[off + 1],
            self.bytes[off + 2],
            self.bytes[off + 3],
        ];
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

struct Header {
    endian: Endian,
    dims: Dims,
    spacing: Spacing,
    dtype: DType,
    vox_offset: usize,
    slope: f32,
    inter: f32,
    single_file: bool,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = io_util::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::MalformedHeader(format!(
            "file holds {} bytes, header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let sizeof = [bytes[0], bytes[1], bytes[2], bytes[3]];
    let endian = if i32::from_le_bytes(sizeof) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(sizeof) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::MalformedHeader(format!(
            "sizeof_hdr is {}, expected 348",
            i32::from_le_bytes(sizeof)
        )));
    };
    let magic = &bytes[344..348];
    let single_file = if magic == MAGIC_SINGLE {
        true
    } else if magic == MAGIC_PAIR {
        false
    } else {
        return Err(Error::MalformedHeader(format!("bad magic {magic:?}")));
    };

    let r = HeaderReader { bytes, endian };
    let ndim = r.i16(40);
    if ndim != 3 {
        return Err(Error::MalformedHeader(format!("dim[0] is {ndim}, expected 3")));
    }
    let extent = |i: usize| -> Result<usize> {
        let v = r.i16(40 + 2 * i);
        if v < 1 {
            return Err(Error::MalformedHeader(format!("dim[{i}] is {v}")));
        }
        Ok(v as usize)
    };
    let (nx, ny, nz) = (extent(1)?, extent(2)?, extent(3)?);

    let datatype = r.i16(70);
    let dtype = match datatype {
        DT_UINT8 => DType::Uint8,
        DT_INT16 => DType::Int16,
        DT_FLOAT32 => DType::Float32,
        other => return Err(Error::UnsupportedDatatype(other)),
    };

    let pix = |i: usize| r.f32(76 + 4 * i) as f64;
    let spacing = Spacing([pix(3).abs(), pix(2).abs(), pix(1).abs()]);
    if !spacing.0.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::MalformedHeader(format!(
            "pixdim must be positive, got {:?}",
            spacing.0
        )));
    }

    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(Error::MalformedHeader(format!("vox_offset is {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    if single_file && vox_offset < HEADER_SIZE {
        return Err(Error::MalformedHeader(format!(
            "vox_offset {vox_offset} overlaps the header"
        )));
    }

    Ok(Header {
        endian,
        dims: Dims::new(nz, ny, nx),
        spacing,
        dtype,
        vox_offset,
        slope: r.f32(112),
        inter: r.f32(116),
        single_file,
    })
}

fn image_path_for(header_path: &Path) -> PathBuf {
    let s = header_path.to_string_lossy();
    let lower = s.to_ascii_lowercase();
    if lower.ends_with(".hdr.gz") {
        PathBuf::from(format!("{}.img.gz", &s[..s.len() - 7]))
    } else {
        header_path.with_extension("img")
    }
}

/// Loads a 3D NIfTI-1 volume. When `scl_slope` is nonzero (and not the
/// identity 1/0), values are rescaled to `slope * raw + inter` and stored as
/// float32.
pub fn load_nifti(path: &Path) -> Result<VolumeTensor> {
    let bytes = read_maybe_gz(path)?;
    let header = parse_header(&bytes)?;
    let image_bytes;
    let payload: &[u8] = if header.single_file {
        bytes.get(header.vox_offset..).unwrap_or(&[])
    } else {
        image_bytes = read_maybe_gz(&image_path_for(path))?;
        image_bytes.get(header.vox_offset..).unwrap_or(&[])
    };

    let count = header.dims.voxel_count();
    let expected = count * header.dtype.byte_size();
    if payload.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: payload.len(),
        });
    }

    let data = match header.endian {
        Endian::Little => VoxelData::from_le_bytes(header.dtype, payload, count),
        Endian::Big => {
            let width = header.dtype.byte_size();
            let swapped: Vec<u8> = payload[..expected]
                .chunks_exact(width)
                .flat_map(|c| c.iter().rev().copied())
                .collect();
            VoxelData::from_le_bytes(header.dtype, &swapped, count)
        }
    };

    let scaled = header.slope.is_finite() && header.slope != 0.0 && !(header.slope == 1.0 && header.inter == 0.0);
    let data = if scaled {
        let (m, b) = (header.slope, header.inter);
        VoxelData::Float32((0..count).map(|i| data.get(i) * m + b).collect())
    } else {
        data
    };
    VolumeTensor::new(header.dims, header.spacing, VolumeKind::Image, data)
}

/// Writes an uncompressed little-endian single-file NIfTI-1 volume without
/// intensity scaling.
pub fn save_nifti(vol: &VolumeTensor, path: &Path) -> Result<()> {
    let mut h = vec![0u8; SINGLE_FILE_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let d = vol.dims();
    for (i, v) in [3, d.width, d.height, d.depth, 1, 1, 1, 1].into_iter().enumerate() {
        let v = i16::try_from(v).map_err(|_| Error::DimsMismatch(format!("dimension {v} exceeds NIfTI-1 range")))?;
        put_i16(&mut h, 40 + 2 * i, v);
    }
    let (code, bitpix) = match vol.dtype() {
        DType::Uint8 => (DT_UINT8, 8),
        DType::Int16 => (DT_INT16, 16),
        DType::Float32 => (DT_FLOAT32, 32),
    };
    put_i16(&mut h, 70, code);
    put_i16(&mut h, 72, bitpix);
    let s = vol.spacing().0;
    put_f32(&mut h, 76, 1.0);
    put_f32(&mut h, 80, s[2] as f32);
    put_f32(&mut h, 84, s[1] as f32);
    put_f32(&mut h, 88, s[0] as f32);
    put_f32(&mut h, 108, SINGLE_FILE_OFFSET as f32);
    h[344..348].copy_from_slice(MAGIC_SINGLE);
    h.extend_from_slice(&vol.data().to_le_bytes());
    io_util::write_atomic(path, &h)
}
