mod common;

use common::*;
use ctreport_core::grid::{adaptive_window, pooled_grid};
use ctreport_core::r2pool::{
    adaptive_pool_slice, global_tokens, r2_pool, select_region_slices, select_slice, SelectedSlice, TokenKind,
};
use ctreport_core::volume::Dims;
use ctreport_core::{Grid, Region, TokenMatrix};
use ctreport_oracles::pooling as oracle;
use proptest::prelude::*;
use rand::Rng;

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

#[test]
fn windows_match_oracle() {
    for input in 1..=40 {
        for output in 1..=40 {
            for i in 0..output {
                let w = adaptive_window(i, input, output);
                assert_eq!(
                    (w.start, w.end),
                    oracle::window(i, input, output),
                    "{i} {input}->{output}"
                );
            }
        }
    }
}

#[test]
fn pooled_grid_matches_oracle() {
    for gh in 1..=20 {
        for gw in 1..=20 {
            for cells in divisors(gh * gw) {
                let g = pooled_grid(Grid::new(gh, gw), cells);
                assert_eq!((g.rows, g.cols), oracle::best_factor_pair(gh, gw, cells));
            }
        }
    }
}

#[test]
fn global_and_adaptive_pooling_match_oracle_on_small_grids() {
    let mut r = rng(1);
    for gh in 1..=8 {
        for gw in 1..=8 {
            let (d, c) = (3, 3);
            let stack = random_stack(&mut r, d, Grid::new(gh, gw), c, &[7]);
            let level = stack.level(7).unwrap();
            let glob = global_tokens(&stack, 7).unwrap();
            let expect = oracle::slice_means(level.as_slice(), d, gh * gw, c);
            for (a, b) in glob.as_slice().iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-6);
            }
            for factor in divisors(gh * gw) {
                let tokens = TokenMatrix::from_vec(gh * gw, c, level.slice(1).to_vec());
                let pooled = adaptive_pool_slice(&tokens, Grid::new(gh, gw), factor).unwrap();
                let (oh, ow) = (pooled.grid.rows, pooled.grid.cols);
                let expect = oracle::adaptive_pool(level.slice(1), gh, gw, c, oh, ow);
                for (a, b) in pooled.tokens.as_slice().iter().zip(&expect) {
                    assert!((a - b).abs() <= 1e-6, "{gh}x{gw} / {factor}");
                }
            }
        }
    }
}

#[test]
fn integer_tokens_pool_exactly() {
    let mut r = rng(2);
    let (gh, gw) = (6, 6);
    let data: Vec<f32> = (0..gh * gw).map(|_| r.gen_range(0..16) as f32).collect();
    let tokens = TokenMatrix::from_vec(gh * gw, 1, data.clone());
    let pooled = adaptive_pool_slice(&tokens, Grid::new(gh, gw), 4).unwrap();
    assert_eq!(
        pooled.tokens.as_slice(),
        oracle::adaptive_pool(&data, gh, gw, 1, pooled.grid.rows, pooled.grid.cols)
    );
}

#[test]
fn selection_matches_argmax_oracle() {
    let mut r = rng(3);
    for _ in 0..100 {
        let dims = Dims::new(r.gen_range(1..9), r.gen_range(1..6), r.gen_range(1..6));
        let masks: Vec<_> = (0..6)
            .map(|_| {
                let density = if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.05..0.6) };
                random_mask(&mut r, dims, density)
            })
            .collect();
        let set = mask_set(masks);
        let sel = select_region_slices(&set);
        for (s, (region, m)) in sel.iter().zip(set.regions()) {
            assert_eq!(s.region, region);
            assert_eq!(s.slice, oracle::argmax_or_middle(&m.slice_positive_counts()));
        }
    }
    let empty =
        ctreport_core::volume::VolumeTensor::empty_mask(Dims::new(7, 2, 2), ctreport_core::volume::Spacing::UNIT);
    assert_eq!(select_slice(&empty), 3);
}

#[test]
fn default_token_budget_is_356() {
    let mut r = rng(4);
    let stack = random_stack(&mut r, 32, Grid::new(18, 18), 4, &[12]);
    let selection: Vec<SelectedSlice> = Region::ALL
        .iter()
        .enumerate()
        .map(|(i, &region)| SelectedSlice { region, slice: 5 * i })
        .collect();
    let seq = r2_pool(&stack, &selection, 12).unwrap();
    assert_eq!(seq.len(), 356);
    assert_eq!(seq.layout.iter().filter(|t| t.kind == TokenKind::Global).count(), 32);
    assert_eq!(seq.layout[32].region, Some(Region::Lung));
    assert_eq!(seq.layout[32 + 54].region, Some(Region::LargeAirways));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_law(d in 1usize..12, gh in 1usize..9, gw in 1usize..9, pick in 0usize..64, seed: u64) {
        let t = gh * gw;
        let divs = divisors(t);
        let s = divs[pick % divs.len()];
        let mut r = rng(seed);
        let stack = random_stack(&mut r, d, Grid::new(gh, gw), 2, &[1]);
        let selection: Vec<SelectedSlice> = (0..s)
            .map(|i| SelectedSlice { region: Region::ALL[i % 6], slice: r.gen_range(0..d) })
            .collect();
        let seq = r2_pool(&stack, &selection, 1).unwrap();
        prop_assert_eq!(seq.len(), d + t);
        if d >= 2 && t >= 3 {
            prop_assert!(seq.len() < d * t);
        }
    }

    #[test]
    fn constant_features_pool_to_constant(v in -5.0f32..5.0, gh in 1usize..9, gw in 1usize..9) {
        let tokens = TokenMatrix::from_vec(gh * gw, 2, vec![v; gh * gw * 2]);
        let pooled = adaptive_pool_slice(&tokens, Grid::new(gh, gw), 1).unwrap();
        prop_assert!(pooled.tokens.as_slice().iter().all(|x| (x - v).abs() <= 1e-6));
    }
}
