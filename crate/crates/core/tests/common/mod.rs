#![allow(dead_code)]

use std::collections::BTreeMap;

use ctreport_core::encoder::{FeatureLevel, SliceFeatureStack};
use ctreport_core::volume::{Dims, RegionMaskSet, Spacing, VolumeTensor};
use ctreport_core::{Grid, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stack(
    rng: &mut ChaCha8Rng,
    depth: usize,
    grid: Grid,
    channels: usize,
    level_ids: &[u32],
) -> SliceFeatureStack {
    let levels = level_ids
        .iter()
        .map(|&id| {
            let data = (0..depth * grid.len() * channels)
                .map(|_| rng.gen_range(-1.0f32..1.0))
                .collect();
            FeatureLevel::new(id, grid, depth, channels, data).unwrap()
        })
        .collect();
    SliceFeatureStack::new(levels).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, dims: Dims, density: f64) -> VolumeTensor {
    VolumeTensor::mask_from_fn(dims, Spacing::UNIT, |_, _, _| rng.gen_bool(density))
}

pub fn mask_set(regions: Vec<VolumeTensor>) -> RegionMaskSet {
    let map = Region::ALL.into_iter().zip(regions).collect();
    RegionMaskSet::new(map, BTreeMap::new(), BTreeMap::new()).unwrap()
}

pub fn flags(mask: &VolumeTensor) -> Vec<bool> {
    mask.positive_flags()
}
