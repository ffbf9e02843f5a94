//! Synthetic chest phantom: analytic shapes standing in for a CT volume and
//! its pseudo-masks, so tests and demos need no patient data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::region::Region;
use crate::volume::{Dims, RegionMaskSet, Spacing, Study, VolumeKind, VolumeTensor, VoxelData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub id: String,
    pub dims: Dims,
    pub spacing: Spacing,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            id: "phantom".into(),
            dims: Dims::new(32, 96, 96),
            spacing: Spacing([8.0, 3.0, 3.0]),
            seed: 0,
        }
    }
}

/// Shape geometry in normalized `[0, 1]` coordinates (z, y, x).
#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipsoid {
        center: [f64; 3],
        radii: [f64; 3],
    },
    /// Sphere with radius in millimetres.
    Sphere {
        center: [f64; 3],
        radius_mm: f64,
    },
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
    },
    /// Axis-aligned cylinder along z.
    Tube {
        center_yx: [f64; 2],
        radius: f64,
        z: [f64; 2],
    },
}

struct Grid {
    dims: Dims,
    spacing: Spacing,
}

impl Grid {
    fn frac(&self, d: usize, h: usize, w: usize) -> [f64; 3] {
        [
            (d as f64 + 0.5) / self.dims.depth as f64,
            (h as f64 + 0.5) / self.dims.height as f64,
            (w as f64 + 0.5) / self.dims.width as f64,
        ]
    }

    fn extent_mm(&self) -> [f64; 3] {
        let a = self.dims.as_array();
        [0, 1, 2].map(|i| a[i] as f64 * self.spacing.0[i])
    }

    fn contains(&self, shape: Shape, p: [f64; 3]) -> bool {
        match shape {
            Shape::Ellipsoid { center, radii } => {
                (0..3).map(|i| ((p[i] - center[i]) / radii[i]).powi(2)).sum::<f64>() <= 1.0
            }
            Shape::Sphere { center, radius_mm } => {
                let e = self.extent_mm();
                (0..3).map(|i| ((p[i] - center[i]) * e[i]).powi(2)).sum::<f64>() <= radius_mm * radius_mm
            }
            Shape::Box { lo, hi } => (0..3).all(|i| lo[i] <= p[i] && p[i] < hi[i]),
            Shape::Tube { center_yx, radius, z } => {
                z[0] <= p[0]
                    && p[0] < z[1]
                    && ((p[1] - center_yx[0]) / radius).powi(2) + ((p[2] - center_yx[1]) / radius).powi(2) <= 1.0
            }
        }
    }

    fn mask(&self, include: &[Shape], exclude: &[Shape]) -> VolumeTensor {
        VolumeTensor::mask_from_fn(self.dims, self.spacing, |d, h, w| {
            let p = self.frac(d, h, w);
            include.iter().any(|&s| self.contains(s, p)) && !exclude.iter().any(|&s| self.contains(s, p))
        })
    }
}

const BODY: Shape = Shape::Tube {
    center_yx: [0.5, 0.5],
    radius: 0.46,
    z: [0.0, 1.0],
};
const LEFT_LUNG: Shape = Shape::Ellipsoid {
    center: [0.38, 0.45, 0.29],
    radii: [0.34, 0.3, 0.15],
};
const RIGHT_LUNG: Shape = Shape::Ellipsoid {
    center: [0.38, 0.45, 0.71],
    radii: [0.34, 0.3, 0.15],
};
const TRACHEA: Shape = Shape::Tube {
    center_yx: [0.4, 0.5],
    radius: 0.04,
    z: [0.0, 0.42],
};
const HEART: Shape = Shape::Ellipsoid {
    center: [0.55, 0.52, 0.55],
    radii: [0.16, 0.14, 0.12],
};
const MEDIASTINUM: Shape = Shape::Box {
    lo: [0.05, 0.25, 0.43],
    hi: [0.7, 0.7, 0.57],
};
const SPINE: Shape = Shape::Box {
    lo: [0.0, 0.74, 0.45],
    hi: [1.0, 0.86, 0.55],
};
const STERNUM: Shape = Shape::Box {
    lo: [0.1, 0.1, 0.47],
    hi: [0.6, 0.15, 0.53],
};
const UPPER_ABDOMEN: Shape = Shape::Box {
    lo: [0.75, 0.0, 0.0],
    hi: [1.0, 1.0, 1.0],
};
const LIVER: Shape = Shape::Ellipsoid {
    center: [0.88, 0.5, 0.34],
    radii: [0.14, 0.25, 0.2],
};
const KIDNEY: Shape = Shape::Ellipsoid {
    center: [0.92, 0.68, 0.7],
    radii: [0.1, 0.08, 0.06],
};
const NODULE_SMALL: Shape = Shape::Sphere {
    center: [0.3, 0.4, 0.28],
    radius_mm: 6.0,
};
const NODULE_LARGE: Shape = Shape::Sphere {
    center: [0.5, 0.5, 0.73],
    radius_mm: 10.0,
};
const CYST: Shape = Shape::Sphere {
    center: [0.88, 0.48, 0.34],
    radius_mm: 12.0,
};

/// Lesions in the phantom with their sphere radii in millimetres.
pub const PHANTOM_LESION_RADII_MM: [(&str, &[f64]); 2] = [("cyst", &[12.0]), ("lung_nodule", &[6.0, 10.0])];

/// Builds the phantom study: six region masks, organs `heart`, `kidney`,
/// `liver`, `lung`, lesions `lung_nodule` (two spheres) and `cyst` (one
/// sphere whose name carries no region, so its location comes from overlap).
pub fn make_phantom(cfg: &PhantomConfig) -> Result<Study> {
    let g = Grid {
        dims: cfg.dims,
        spacing: cfg.spacing,
    };
    let lungs = [LEFT_LUNG, RIGHT_LUNG];
    let bone = [SPINE, STERNUM];
    let abdomen_body = g.mask(&[BODY], &[]);
    let mut regions = BTreeMap::new();
    regions.insert(Region::Lung, g.mask(&lungs, &[TRACHEA, UPPER_ABDOMEN]));
    regions.insert(Region::LargeAirways, g.mask(&[TRACHEA], &[]));
    regions.insert(
        Region::Mediastinum,
        g.mask(&[MEDIASTINUM], &[TRACHEA, HEART, SPINE, STERNUM]),
    );
    regions.insert(Region::HeartGreatVessels, g.mask(&[HEART], &[]));
    regions.insert(Region::Osseous, g.mask(&bone, &[]));
    let upper = g.mask(&[UPPER_ABDOMEN], &[SPINE]);
    let upper = VolumeTensor::mask_from_fn(cfg.dims, cfg.spacing, |d, h, w| {
        let i = cfg.dims.index(d, h, w);
        upper.value(i) != 0.0 && abdomen_body.value(i) != 0.0
    });
    regions.insert(Region::UpperAbdomen, upper);

    let mut organs = BTreeMap::new();
    organs.insert("heart".to_owned(), g.mask(&[HEART], &[]));
    organs.insert("kidney".to_owned(), g.mask(&[KIDNEY], &[]));
    organs.insert("liver".to_owned(), g.mask(&[LIVER], &[]));
    organs.insert("lung".to_owned(), regions[&Region::Lung].clone());

    let mut lesions = BTreeMap::new();
    lesions.insert("cyst".to_owned(), g.mask(&[CYST], &[]));
    lesions.insert("lung_nodule".to_owned(), g.mask(&[NODULE_SMALL, NODULE_LARGE], &[]));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ct = Vec::with_capacity(cfg.dims.voxel_count());
    for d in 0..cfg.dims.depth {
        for h in 0..cfg.dims.height {
            for w in 0..cfg.dims.width {
                let p = g.frac(d, h, w);
                let inside = |s: Shape| g.contains(s, p);
                let hu: f64 = if [NODULE_SMALL, NODULE_LARGE].into_iter().any(inside) {
                    20.0
                } else if inside(CYST) {
                    5.0
                } else if bone.into_iter().any(inside) {
                    700.0
                } else if inside(TRACHEA) {
                    -1000.0
                } else if lungs.into_iter().any(inside) && !inside(UPPER_ABDOMEN) {
                    -850.0
                } else if inside(HEART) {
                    45.0
                } else if inside(LIVER) {
                    60.0
                } else if inside(KIDNEY) {
                    30.0
                } else if inside(BODY) {
                    -80.0
                } else {
                    -1000.0
                };
                let noise: f64 = rng.gen_range(-20.0..20.0);
                ct.push((hu + noise).round() as i16);
            }
        }
    }
    let ct = VolumeTensor::new(cfg.dims, cfg.spacing, VolumeKind::Image, VoxelData::Int16(ct))?;
    Ok(Study {
        id: cfg.id.clone(),
        ct,
        masks: RegionMaskSet::new(regions, lesions, organs)?,
    })
}
