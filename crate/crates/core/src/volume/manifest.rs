//! Mask manifests: the file-name convention that binds pseudo-mask files to
//! canonical regions, named lesions and named organs.
//!
//! ```json
//! {"ct": "ct.nii.gz",
//!  "regions": {"1": "lung.nii.gz", ..., "6": "upper_abdomen.nii.gz"},
//!  "lesions": {"lung_nodule": "lung_nodule.nii.gz"},
//!  "organs": {"liver": "liver.nii.gz"}}
//! ```
//!
//! Relative paths resolve against the manifest's directory. An optional `"id"`
//! names the study; otherwise the manifest file stem is used.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    load_volume, normalize_minmax, resize_volume, save_raw_container, Dims, Spacing, VolumeKind, VolumeTensor,
};
use crate::error::{Error, Result};
use crate::io_util;
use crate::region::Region;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub ct: String,
    pub regions: BTreeMap<String, String>,
    #[serde(default)]
    pub lesions: BTreeMap<String, String>,
    #[serde(default)]
    pub organs: BTreeMap<String, String>,
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::SchemaViolation(format!(
            "{kind} name {name:?} must be non-empty and use only [A-Za-z0-9_-]"
        )))
    }
}

/// The six region masks (canonical order) plus optional lesion and organ
/// masks, all sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMaskSet {
    regions: Vec<VolumeTensor>,
    lesions: BTreeMap<String, VolumeTensor>,
    organs: BTreeMap<String, VolumeTensor>,
}

impl RegionMaskSet {
    pub fn new(
        mut regions: BTreeMap<Region, VolumeTensor>,
        lesions: BTreeMap<String, VolumeTensor>,
        organs: BTreeMap<String, VolumeTensor>,
    ) -> Result<Self> {
        let mut ordered = Vec::with_capacity(Region::COUNT);
        for r in Region::ALL {
            let m = regions.remove(&r).ok_or(Error::MissingRegion(r))?;
            ordered.push(m.into_mask()?);
        }
        let set = RegionMaskSet {
            regions: ordered,
            lesions: lesions
                .into_iter()
                .map(|(k, v)| check_name("lesion", &k).and(v.into_mask()).map(|v| (k, v)))
                .collect::<Result<_>>()?,
            organs: organs
                .into_iter()
                .map(|(k, v)| check_name("organ", &k).and(v.into_mask()).map(|v| (k, v)))
                .collect::<Result<_>>()?,
        };
        let (dims, spacing) = (set.dims(), set.spacing());
        for (name, m) in set.all_masks() {
            if m.dims() != dims {
                return Err(Error::DimsMismatch(format!(
                    "mask {name} has dims {}, expected {dims}",
                    m.dims()
                )));
            }
            if !m.spacing().approx_eq(&spacing) {
                return Err(Error::DimsMismatch(format!(
                    "mask {name} has spacing {:?}, expected {:?}",
                    m.spacing().0,
                    spacing.0
                )));
            }
        }
        Ok(set)
    }

    pub fn dims(&self) -> Dims {
        self.regions[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.regions[0].spacing()
    }

    pub fn region(&self, r: Region) -> &VolumeTensor {
        &self.regions[r.index()]
    }

    /// Region masks in canonical order.
    pub fn regions(&self) -> impl Iterator<Item = (Region, &VolumeTensor)> {
        Region::ALL.into_iter().zip(self.regions.iter())
    }

    pub fn lesions(&self) -> &BTreeMap<String, VolumeTensor> {
        &self.lesions
    }

    pub fn organs(&self) -> &BTreeMap<String, VolumeTensor> {
        &self.organs
    }

    fn all_masks(&self) -> impl Iterator<Item = (String, &VolumeTensor)> {
        self.regions()
            .map(|(r, m)| (format!("region {}", r.id()), m))
            .chain(self.lesions.iter().map(|(k, m)| (format!("lesion {k}"), m)))
            .chain(self.organs.iter().map(|(k, m)| (format!("organ {k}"), m)))
    }

    /// Checks that every mask lives on the CT grid.
    pub fn validate_against(&self, ct: &VolumeTensor) -> Result<()> {
        if self.dims() != ct.dims() {
            return Err(Error::DimsMismatch(format!(
                "masks have dims {}, CT has {}",
                self.dims(),
                ct.dims()
            )));
        }
        if !self.spacing().approx_eq(&ct.spacing()) {
            return Err(Error::DimsMismatch(format!(
                "masks have spacing {:?}, CT has {:?}",
                self.spacing().0,
                ct.spacing().0
            )));
        }
        Ok(())
    }

    /// Nearest-neighbour resize of every mask.
    pub fn resized(&self, target: Dims) -> Result<RegionMaskSet> {
        let resize = |m: &VolumeTensor| resize_volume(m, target, VolumeKind::Mask);
        Ok(RegionMaskSet {
            regions: self.regions.iter().map(resize).collect::<Result<_>>()?,
            lesions: self
                .lesions
                .iter()
                .map(|(k, m)| resize(m).map(|m| (k.clone(), m)))
                .collect::<Result<_>>()?,
            organs: self
                .organs
                .iter()
                .map(|(k, m)| resize(m).map(|m| (k.clone(), m)))
                .collect::<Result<_>>()?,
        })
    }
}

/// A CT volume with its mask set.
#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub id: String,
    pub ct: VolumeTensor,
    pub masks: RegionMaskSet,
}

fn parse_manifest(manifest_path: &Path) -> Result<MaskManifest> {
    io_util::read_json(manifest_path)
}

fn load_masks(manifest_path: &Path, manifest: &MaskManifest) -> Result<RegionMaskSet> {
    let mut regions = BTreeMap::new();
    for (key, file) in &manifest.regions {
        let region = key
            .parse::<u8>()
            .ok()
            .and_then(Region::from_id)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown region key {key:?}")))?;
        let vol = load_volume(&io_util::resolve_relative(manifest_path, file))?;
        regions.insert(region, vol);
    }
    if let Some(missing) = Region::ALL.into_iter().find(|r| !regions.contains_key(r)) {
        return Err(Error::MissingRegion(missing));
    }
    let load_named = |entries: &BTreeMap<String, String>| -> Result<BTreeMap<String, VolumeTensor>> {
        entries
            .iter()
            .map(|(name, file)| load_volume(&io_util::resolve_relative(manifest_path, file)).map(|v| (name.clone(), v)))
            .collect()
    };
    RegionMaskSet::new(regions, load_named(&manifest.lesions)?, load_named(&manifest.organs)?)
}

/// Loads the mask set named by a manifest and validates it against the
/// manifest's CT volume.
pub fn load_mask_set(manifest_path: &Path) -> Result<RegionMaskSet> {
    Ok(load_study(manifest_path)?.masks)
}

pub fn load_study(manifest_path: &Path) -> Result<Study> {
    let manifest = parse_manifest(manifest_path)?;
    let masks = load_masks(manifest_path, &manifest)?;
    let ct = load_volume(&io_util::resolve_relative(manifest_path, &manifest.ct))?;
    masks.validate_against(&ct)?;
    let id = manifest.id.clone().unwrap_or_else(|| {
        manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "study".to_owned())
    });
    Ok(Study { id, ct, masks })
}

impl Study {
    /// Min-max normalizes the CT and resizes CT and masks to `target`.
    pub fn preprocess(&self, target: Dims) -> Result<Study> {
        let ct = resize_volume(&normalize_minmax(&self.ct), target, VolumeKind::Image)?;
        Ok(Study {
            id: self.id.clone(),
            ct,
            masks: self.masks.resized(target)?,
        })
    }

    /// Writes every volume as a raw container under `dir` and returns the path
    /// of the manifest describing them.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let save = |name: String, vol: &VolumeTensor| -> Result<String> {
            save_raw_container(vol, &dir.join(&name))?;
            Ok(name)
        };
        let manifest = MaskManifest {
            id: Some(self.id.clone()),
            ct: save("ct.json".into(), &self.ct)?,
            regions: self
                .masks
                .regions()
                .map(|(r, m)| Ok((r.id().to_string(), save(format!("region_{}.json", r.id()), m)?)))
                .collect::<Result<_>>()?,
            lesions: self
                .masks
                .lesions()
                .iter()
                .map(|(k, m)| Ok((k.clone(), save(format!("lesion_{k}.json"), m)?)))
                .collect::<Result<_>>()?,
            organs: self
                .masks
                .organs()
                .iter()
                .map(|(k, m)| Ok((k.clone(), save(format!("organ_{k}.json"), m)?)))
                .collect::<Result<_>>()?,
        };
        let path = dir.join("manifest.json");
        io_util::write_json(&path, &manifest)?;
        Ok(path)
    }
}
