//! 3D connected-component labeling (two-pass union-find).

use serde::{Deserialize, Serialize};

use crate::volume::{Dims, VolumeTensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets that precede a voxel in raster order.
    fn backward_offsets(self) -> Vec<(isize, isize, isize)> {
        match self {
            Connectivity::Six => vec![(-1, 0, 0), (0, -1, 0), (0, 0, -1)],
            Connectivity::TwentySix => {
                let mut v = Vec::with_capacity(13);
                for dz in -1..=1isize {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            if (dz, dy, dx) < (0, 0, 0) {
                                v.push((dz, dy, dx));
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

/// Component labels per voxel (0 = background, components 1..=count).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    pub dims: Dims,
    pub labels: Vec<u32>,
    pub count: usize,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Labels connected components of the nonzero voxels. Labels are numbered in
/// order of each component's first voxel in depth-slowest raster order.
pub fn label_components_3d(mask: &VolumeTensor, connectivity: Connectivity) -> Labeling {
    let dims = mask.dims();
    let (nd, nh, nw) = (dims.depth as isize, dims.height as isize, dims.width as isize);
    let offsets = connectivity.backward_offsets();
    let mut labels = vec![0u32; dims.voxel_count()];
    // parent[0] is unused so provisional labels start at 1.
    let mut parent: Vec<u32> = vec![0];

    for d in 0..nd {
        for h in 0..nh {
            for w in 0..nw {
                let i = dims.index(d as usize, h as usize, w as usize);
                if mask.value(i) == 0.0 {
                    continue;
                }
                let mut current = 0u32;
                for &(dz, dy, dx) in &offsets {
                    let (z, y, x) = (d + dz, h + dy, w + dx);
                    if z < 0 || y < 0 || x < 0 || y >= nh || x >= nw {
                        continue;
                    }
                    let n = labels[dims.index(z as usize, y as usize, x as usize)];
                    if n == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = n;
                    } else if n != current {
                        union(&mut parent, current, n);
                    }
                }
                if current == 0 {
                    current = parent.len() as u32;
                    parent.push(current);
                }
                labels[i] = current;
            }
        }
    }

    let mut final_label = vec![0u32; parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if final_label[root] == 0 {
            count += 1;
            final_label[root] = count;
        }
        *l = final_label[root];
    }
    Labeling {
        dims,
        labels,
        count: count as usize,
    }
}

/// Half-open bounding box `[min, max)` per axis (z, y, x) for every
/// component, ordered by label.
pub fn component_bboxes(labeling: &Labeling) -> Vec<[(usize, usize); 3]> {
    let mut boxes = vec![[(usize::MAX, 0usize); 3]; labeling.count];
    let dims = labeling.dims;
    for d in 0..dims.depth {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let l = labeling.labels[dims.index(d, h, w)];
                if l == 0 {
                    continue;
                }
                let b = &mut boxes[l as usize - 1];
                for (axis, v) in [d, h, w].into_iter().enumerate() {
                    b[axis].0 = b[axis].0.min(v);
                    b[axis].1 = b[axis].1.max(v + 1);
                }
            }
        }
    }
    boxes
}
