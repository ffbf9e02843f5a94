//! Token-grid geometry shared by the encoder, R² pooling and mask pooling.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A `rows x cols` token grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Grid { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<[usize; 2]> for Grid {
    fn from(a: [usize; 2]) -> Self {
        Grid::new(a[0], a[1])
    }
}

impl From<Grid> for [usize; 2] {
    fn from(g: Grid) -> Self {
        [g.rows, g.cols]
    }
}

/// Input range covered by output cell `i` when `input` cells are adaptively
/// pooled to `output` cells: `[floor(i*in/out), ceil((i+1)*in/out))`.
#[inline]
pub fn adaptive_window(i: usize, input: usize, output: usize) -> Range<usize> {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    start..end
}

/// Output grid for pooling `grid` down to `cells` tokens: the factor pair
/// `(oh, ow)` with `oh * ow == cells` whose aspect ratio is closest to the
/// input's, preferring the smaller `oh` on ties. Comparison is exact.
pub fn pooled_grid(grid: Grid, cells: usize) -> Grid {
    assert!(cells > 0 && !grid.is_empty());
    let (gh, gw) = (grid.rows as u128, grid.cols as u128);
    let mut best: Option<(u128, u128, Grid)> = None;
    for oh in 1..=cells {
        if cells % oh != 0 {
            continue;
        }
        let ow = cells / oh;
        // |oh/ow - gh/gw| = |oh*gw - gh*ow| / (ow*gw)
        let num = (oh as u128 * gw).abs_diff(gh * ow as u128);
        let den = ow as u128 * gw;
        let better = match best {
            None => true,
            Some((bn, bd, _)) => num * bd < bn * den,
        };
        if better {
            best = Some((num, den, Grid::new(oh, ow)));
        }
    }
    best.expect("cells has at least the divisor 1").2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_pair_for_default_budget() {
        // divisors of 54: (1,54) (2,27) (3,18) (6,9) (9,6) (18,3) (27,2) (54,1);
        // against ratio 1 the distances are 53/54, 25/27, 5/6, 1/3, 1/2, 5, 12.5, 53.
        assert_eq!(pooled_grid(Grid::new(18, 18), 54), Grid::new(6, 9));
        assert_eq!(6 * 54, 324);
    }

    #[test]
    fn identity_pair_and_ties() {
        for (r, c) in [(1, 1), (3, 5), (8, 2), (7, 7)] {
            assert_eq!(pooled_grid(Grid::new(r, c), r * c), Grid::new(r, c));
        }
        // 2x2 -> 2 cells: (1,2) is 1/2 away, (2,1) is 1 away.
        assert_eq!(pooled_grid(Grid::new(2, 2), 2), Grid::new(1, 2));
        // 1x1 aspect, 4 cells: (2,2) exact.
        assert_eq!(pooled_grid(Grid::new(5, 5), 4), Grid::new(2, 2));
    }

    #[test]
    fn windows_cover_input() {
        for input in 1..12 {
            for output in 1..12 {
                let mut covered = vec![false; input];
                for i in 0..output {
                    let w = adaptive_window(i, input, output);
                    assert!(!w.is_empty() && w.end <= input);
                    for j in w {
                        covered[j] = true;
                    }
                }
                assert!(covered.iter().all(|c| *c));
            }
        }
        assert_eq!(adaptive_window(1, 18, 6), 3..6);
        assert_eq!(adaptive_window(1, 5, 3), 1..4);
    }
}
