//! Bit-exact raw container: `<name>.json` header plus `<name>.bin` payload
//! (little-endian, row-major, depth slowest).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, Dims, Spacing, VolumeKind, VolumeTensor, VoxelData};
use crate::error::{Error, Result};
use crate::io_util;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub dtype: DType,
    pub kind: VolumeKind,
}

pub fn save_raw_container(vol: &VolumeTensor, header_path: &Path) -> Result<()> {
    let header = RawHeader {
        dims: vol.dims(),
        spacing: vol.spacing(),
        dtype: vol.dtype(),
        kind: vol.kind(),
    };
    io_util::write_atomic(
        &io_util::sibling_with_suffix(header_path, "bin"),
        &vol.data().to_le_bytes(),
    )?;
    io_util::write_json(header_path, &header)
}

pub fn load_raw_container(header_path: &Path) -> Result<VolumeTensor> {
    let header: RawHeader = io_util::read_json(header_path)?;
    let payload = io_util::read(&io_util::sibling_with_suffix(header_path, "bin"))?;
    let count = header.dims.voxel_count();
    if count == 0 {
        return Err(Error::SchemaViolation(format!(
            "{}: dims must be non-zero, got {}",
            header_path.display(),
            header.dims
        )));
    }
    let expected = count * header.dtype.byte_size();
    if payload.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::DimsMismatch(format!(
            "{}: payload holds {} bytes but dims {} need {expected}",
            header_path.display(),
            payload.len(),
            header.dims
        )));
    }
    let data = VoxelData::from_le_bytes(header.dtype, &payload, count);
    VolumeTensor::new(header.dims, header.spacing, header.kind, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_pair(dir: &Path, header: &str, payload: &[u8]) -> std::path::PathBuf {
        let h = dir.join("vol.json");
        std::fs::write(&h, header).unwrap();
        std::fs::write(dir.join("vol.bin"), payload).unwrap();
        h
    }

    #[test]
    fn decodes_single_float_voxel() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            r#"{"dims":[1,1,1],"spacing":[1,1,1],"dtype":"float32","kind":"image"}"#,
            &[0x00, 0x00, 0x80, 0x3F],
        );
        let v = load_raw_container(&h).unwrap();
        assert_eq!(v.dims(), Dims::new(1, 1, 1));
        assert_eq!(v.value(0), 1.0);
    }

    #[test]
    fn short_payload_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            r#"{"dims":[2,2,2],"spacing":[1,1,1],"dtype":"int16","kind":"image"}"#,
            &[0u8; 10],
        );
        assert!(matches!(
            load_raw_container(&h),
            Err(Error::TruncatedData {
                expected: 16,
                found: 10
            })
        ));
    }

    #[test]
    fn long_payload_is_dims_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            r#"{"dims":[1,1,2],"spacing":[1,1,1],"dtype":"uint8","kind":"image"}"#,
            &[0u8; 3],
        );
        assert!(matches!(load_raw_container(&h), Err(Error::DimsMismatch(_))));
    }

    #[test]
    fn bad_schema() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_pair(
            dir.path(),
            r#"{"dims":[1,1],"spacing":[1,1,1],"dtype":"uint8","kind":"image"}"#,
            &[0u8; 1],
        );
        assert!(matches!(load_raw_container(&h), Err(Error::SchemaViolation(_))));
        let h = write_pair(
            dir.path(),
            r#"{"dims":[1,1,1],"spacing":[1,1,1],"dtype":"float64","kind":"image"}"#,
            &[0u8; 8],
        );
        assert!(matches!(load_raw_container(&h), Err(Error::SchemaViolation(_))));
    }

    fn arb_data(n: usize) -> impl Strategy<Value = VoxelData> {
        prop_oneof![
            proptest::collection::vec(any::<u8>(), n).prop_map(VoxelData::Uint8),
            proptest::collection::vec(any::<i16>(), n).prop_map(VoxelData::Int16),
            proptest::collection::vec(any::<f32>(), n).prop_map(VoxelData::Float32),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn save_load_is_byte_identical(
            (dims, data) in (1usize..5, 1usize..9, 1usize..9)
                .prop_flat_map(|(d, h, w)| (Just(Dims::new(d, h, w)), arb_data(d * h * w))),
            sz in 0.1f64..5.0,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let vol = VolumeTensor::new(dims, Spacing([sz, 0.7, 0.7]), VolumeKind::Image, data).unwrap();
            let h = dir.path().join("x.json");
            save_raw_container(&vol, &h).unwrap();
            let bytes = std::fs::read(dir.path().join("x.bin")).unwrap();
            let back = load_raw_container(&h).unwrap();
            prop_assert_eq!(back.data().to_le_bytes(), vol.data().to_le_bytes());
            prop_assert_eq!(back.spacing(), vol.spacing());
            save_raw_container(&back, &h).unwrap();
            prop_assert_eq!(std::fs::read(dir.path().join("x.bin")).unwrap(), bytes);
        }
    }
}
