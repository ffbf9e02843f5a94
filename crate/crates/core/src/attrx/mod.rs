//! Patient attribute extraction: deterministic morphometrics from pseudo-masks.
//!
//! Organs get a volume in millilitres. Each lesion mask gets a component
//! count, one bounding-box diameter per component and an anatomical location.
//! Locations come from the lesion's manifest name when it starts with a known
//! region alias (`lung_nodule` -> lung), otherwise from the region mask with
//! the largest overlap, otherwise `"unspecified"`.

mod label;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use label::{component_bboxes, label_components_3d, Connectivity, Labeling};

use crate::region::Region;
use crate::volume::{RegionMaskSet, Spacing, VolumeTensor};

pub const UNSPECIFIED_LOCATION: &str = "unspecified";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiameterUnit {
    #[default]
    Millimeters,
    /// Raw voxel extents, ignoring spacing.
    Voxels,
}

impl DiameterUnit {
    pub fn suffix(self) -> &'static str {
        match self {
            DiameterUnit::Millimeters => "mm",
            DiameterUnit::Voxels => "voxels",
        }
    }

    fn is_mm(&self) -> bool {
        *self == DiameterUnit::Millimeters
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrOptions {
    pub connectivity: Connectivity,
    pub unit: DiameterUnit,
}

pub fn count_mask(mask: &VolumeTensor, connectivity: Connectivity) -> usize {
    label_components_3d(mask, connectivity).count
}

fn diameters_of(labeling: &Labeling, spacing: Spacing, unit: DiameterUnit) -> Vec<f64> {
    component_bboxes(labeling)
        .iter()
        .map(|bbox| {
            bbox.iter()
                .enumerate()
                .map(|(axis, (lo, hi))| {
                    let extent = (hi - lo) as f64;
                    match unit {
                        DiameterUnit::Millimeters => extent * spacing.0[axis],
                        DiameterUnit::Voxels => extent,
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Largest bounding-box side of every component, ordered by component label.
/// Extents are half-open, so a single voxel spans one voxel.
pub fn get_diameters(mask: &VolumeTensor, spacing: Spacing, opts: AttrOptions) -> Vec<f64> {
    diameters_of(&label_components_3d(mask, opts.connectivity), spacing, opts.unit)
}

/// Positive voxel count times voxel volume, in millilitres.
pub fn organ_volume(mask: &VolumeTensor, spacing: Spacing) -> f64 {
    mask.positive_count() as f64 * spacing.voxel_volume_mm3() / 1000.0
}

const REGION_ALIASES: [(Region, &[&str]); 6] = [
    (Region::Lung, &["lung", "lungs", "pulmonary", "pleural"]),
    (
        Region::LargeAirways,
        &[
            "large_airways",
            "large_airway",
            "airways",
            "airway",
            "trachea",
            "tracheal",
            "bronchus",
            "bronchi",
            "bronchial",
        ],
    ),
    (Region::Mediastinum, &["mediastinum", "mediastinal"]),
    (
        Region::HeartGreatVessels,
        &[
            "heart_great_vessels",
            "heart",
            "cardiac",
            "pericardial",
            "aorta",
            "aortic",
        ],
    ),
    (
        Region::Osseous,
        &[
            "osseous",
            "bone",
            "bones",
            "rib",
            "ribs",
            "spine",
            "vertebral",
            "sternum",
        ],
    ),
    (
        Region::UpperAbdomen,
        &[
            "upper_abdomen",
            "abdomen",
            "abdominal",
            "liver",
            "hepatic",
            "kidney",
            "renal",
            "adrenal",
            "spleen",
            "splenic",
        ],
    ),
];

/// Region named by the lesion's prefix: the longest alias that equals the
/// lowercased name or is followed by `_` in it.
pub fn region_from_name(name: &str) -> Option<Region> {
    let name = name.to_ascii_lowercase();
    let mut best: Option<(usize, Region)> = None;
    for (region, aliases) in REGION_ALIASES {
        for alias in aliases {
            let hit = name == *alias || (name.starts_with(alias) && name.as_bytes().get(alias.len()) == Some(&b'_'));
            if hit && best.map_or(true, |(len, _)| alias.len() > len) {
                best = Some((alias.len(), region));
            }
        }
    }
    best.map(|(_, r)| r)
}

/// Location of a lesion: name prefix, then greatest voxel overlap with a
/// region mask (canonical order breaks ties), then `"unspecified"`.
pub fn lesion_location(name: &str, lesion: &VolumeTensor, regions: &RegionMaskSet) -> String {
    if let Some(r) = region_from_name(name) {
        return r.name().to_owned();
    }
    let lesion_flags = lesion.positive_flags();
    let mut best: Option<(usize, Region)> = None;
    for (region, m) in regions.regions() {
        let overlap = lesion_flags
            .iter()
            .enumerate()
            .filter(|(i, &on)| on && m.value(*i) != 0.0)
            .count();
        if overlap > 0 && best.map_or(true, |(n, _)| overlap > n) {
            best = Some((overlap, region));
        }
    }
    best.map_or_else(|| UNSPECIFIED_LOCATION.to_owned(), |(_, r)| r.name().to_owned())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LesionStats {
    pub count: usize,
    pub diameters_mm: Vec<f64>,
    pub location: String,
}

/// Morphometric summary of one study. `diameters_mm` holds voxel extents
/// instead when `diameter_unit` is `voxels`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientAttributes {
    pub organ_volumes_ml: BTreeMap<String, f64>,
    pub lesions: BTreeMap<String, LesionStats>,
    pub spacing_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "DiameterUnit::is_mm")]
    pub diameter_unit: DiameterUnit,
}

impl PatientAttributes {
    pub fn empty(spacing: Spacing) -> Self {
        PatientAttributes {
            organ_volumes_ml: BTreeMap::new(),
            lesions: BTreeMap::new(),
            spacing_mm: spacing.0,
            diameter_unit: DiameterUnit::Millimeters,
        }
    }
}

/// Volumes for every organ mask and count/diameters/location for every
/// lesion mask in the set.
pub fn extract_attributes(masks: &RegionMaskSet, spacing: Spacing, opts: AttrOptions) -> PatientAttributes {
    let organ_volumes_ml = masks
        .organs()
        .par_iter()
        .map(|(name, m)| (name.clone(), organ_volume(m, spacing)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let lesions = masks
        .lesions()
        .par_iter()
        .map(|(name, m)| {
            let labeling = label_components_3d(m, opts.connectivity);
            let stats = LesionStats {
                count: labeling.count,
                diameters_mm: diameters_of(&labeling, spacing, opts.unit),
                location: lesion_location(name, m, masks),
            };
            (name.clone(), stats)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    PatientAttributes {
        organ_volumes_ml,
        lesions,
        spacing_mm: spacing.0,
        diameter_unit: opts.unit,
    }
}
