mod common;

use common::*;
use ctreport_core::attrx::{DiameterUnit, LesionStats, PatientAttributes};
use ctreport_core::eval::{bleu4, meteor_lite, rouge_l, BLEU_EPSILON, ROUGE_BETA};
use ctreport_core::maskex::{SegTokenEntry, SegmentationTokenSet};
use ctreport_core::prompt::{
    build_all_prompts, parse_attribute_report, render_attribute_report, PromptBundle, PromptOptions, SegmentKind,
};
use ctreport_core::r2pool::{r2_pool, SelectedSlice};
use ctreport_core::reports::{
    merge_reports, parse_merged_report, split_report, split_sentences, MergeOptions, LEXICON_V1,
};
use ctreport_core::volume::Spacing;
use ctreport_core::{Grid, Region};
use ctreport_oracles::text as oracle;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const KIND_SNAPSHOT: &str = "T V T S S T S S T S S T S S T S S T S S T T";

fn kinds_string(b: &PromptBundle) -> String {
    b.kinds()
        .iter()
        .map(|k| match k {
            SegmentKind::Text => "T",
            SegmentKind::VisionTokens => "V",
            SegmentKind::SegToken => "S",
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn prompt_layout_snapshot_for_every_positivity_pattern() {
    let mut r = rng(30);
    let stack = random_stack(&mut r, 32, Grid::new(18, 18), 3, &[12]);
    let selection: Vec<SelectedSlice> = Region::ALL
        .iter()
        .map(|&region| SelectedSlice { region, slice: 16 })
        .collect();
    let seq = r2_pool(&stack, &selection, 12).unwrap().with_study_id("s");
    let attr = render_attribute_report(&PatientAttributes::empty(Spacing::UNIT));
    for pattern in 0u32..64 {
        let segs = SegmentationTokenSet {
            study_id: "s".into(),
            entries: Region::ALL
                .iter()
                .map(|&region| SegTokenEntry {
                    region,
                    positive: pattern & (1 << region.index()) != 0,
                    mask_token: vec![pattern as f32; 3],
                    spatial_token: vec![0.0; 3],
                })
                .collect(),
        };
        for b in build_all_prompts(&seq, &segs, &attr, &PromptOptions::default()).unwrap() {
            assert_eq!(kinds_string(&b), KIND_SNAPSHOT);
            assert_eq!(
                b.token_count(),
                356 + 12
                    + b.segments
                        .iter()
                        .filter(|s| s.kind() == SegmentKind::Text)
                        .map(|s| s.token_count())
                        .sum::<usize>()
            );
            assert_eq!(PromptBundle::from_jsonl(&b.to_jsonl()).unwrap(), b);
        }
    }
}

fn name_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,11}"
}

fn attrs_strategy() -> impl Strategy<Value = PatientAttributes> {
    let organ = (name_strategy(), 0.0f64..20000.0);
    let lesion = (
        name_strategy(),
        prop::collection::vec(0.1f64..300.0, 0..5),
        prop::sample::select(vec!["lung", "mediastinum", "upper abdomen", "unspecified"]),
    );
    (
        prop::collection::vec(organ, 0..5),
        prop::collection::vec(lesion, 0..5),
        any::<bool>(),
    )
        .prop_map(|(o, l, vox)| PatientAttributes {
            organ_volumes_ml: o.into_iter().collect(),
            lesions: l
                .into_iter()
                .map(|(n, d, loc)| {
                    (
                        n,
                        LesionStats {
                            count: d.len(),
                            diameters_mm: d,
                            location: loc.into(),
                        },
                    )
                })
                .collect(),
            spacing_mm: [1.0, 1.0, 1.0],
            diameter_unit: if vox {
                DiameterUnit::Voxels
            } else {
                DiameterUnit::Millimeters
            },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attribute_text_round_trips(a in attrs_strategy()) {
        let text = render_attribute_report(&a);
        let back = parse_attribute_report(&text).unwrap();
        let organs: Vec<&String> = a.organ_volumes_ml.keys().collect();
        prop_assert_eq!(back.organ_volumes_ml.keys().collect::<Vec<_>>(), organs);
        for (k, v) in &a.organ_volumes_ml {
            prop_assert!((back.organ_volumes_ml[k] - v).abs() <= 0.05 + 1e-9);
        }
        prop_assert_eq!(back.lesions.len(), a.lesions.len());
        for (k, s) in &a.lesions {
            let b = &back.lesions[k];
            prop_assert_eq!(b.count, s.count);
            prop_assert_eq!(&b.location, &s.location);
            prop_assert_eq!(b.diameters_mm.len(), s.diameters_mm.len());
            for (x, y) in b.diameters_mm.iter().zip(&s.diameters_mm) {
                prop_assert!((x - y).abs() <= 0.05 + 1e-9);
            }
        }
        if !a.lesions.values().all(|s| s.diameters_mm.is_empty()) {
            prop_assert_eq!(back.diameter_unit, Some(a.diameter_unit));
        }
    }
}

const VOCAB: &[&str] = &[
    "lungs",
    "clear",
    "trachea",
    "patent",
    "no",
    "lymph",
    "nodes",
    "heart",
    "normal",
    "size",
    "mild",
    "degenerative",
    "changes",
    "spine",
    "liver",
    "cyst",
    "small",
    "stable",
    "nodule",
    "effusion",
    "3",
    "mm",
    "the",
    "is",
    "are",
];

fn random_sentence(r: &mut impl Rng) -> String {
    let n = r.gen_range(1..8);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(r).unwrap()).collect();
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s + "."
}

#[test]
fn labeled_split_merge_preserves_sentences() {
    let mut r = rng(31);
    for _ in 0..300 {
        let n = r.gen_range(1..15);
        let sentences: Vec<String> = (0..n).map(|_| random_sentence(&mut r)).collect();
        let labels: Vec<Region> = (0..n).map(|_| Region::ALL[r.gen_range(0..6)]).collect();
        let text = sentences.join(" ");
        let split = split_report(&text, Some(&labels), &LEXICON_V1).unwrap();
        let merged = merge_reports(&split, MergeOptions::default());
        let back = parse_merged_report(&merged).unwrap();
        let mut a: Vec<String> = back.all_sentences().cloned().collect();
        let mut b = sentences.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(back.regions, split.regions);
        assert_eq!(split_sentences(&text), sentences);
    }
}

#[test]
fn metric_worked_examples() {
    let bleu = (1.0f64 - 4.0 / 3.0).exp() * BLEU_EPSILON.powf(0.25);
    assert!((bleu4("the cat sat", "the cat sat down") - bleu).abs() <= 1e-6);
    let (p, rec, b2) = (2.0 / 4.0, 2.0 / 3.0, ROUGE_BETA * ROUGE_BETA);
    assert!((rouge_l("a b c d", "a x c") - (1.0 + b2) * p * rec / (rec + b2 * p)).abs() <= 1e-6);
    assert!((meteor_lite("cats sit", "cat sits") - (1.0 - 0.5 * 0.5f64.powi(3))).abs() <= 1e-6);
}

#[test]
fn metrics_match_oracles_on_random_pairs() {
    let mut r = rng(32);
    for _ in 0..300 {
        let c = random_sentence(&mut r) + " " + &random_sentence(&mut r);
        let f = random_sentence(&mut r) + " " + &random_sentence(&mut r);
        assert!(
            (bleu4(&c, &f) - oracle::bleu4(&c, &f, BLEU_EPSILON)).abs() < 1e-12,
            "{c} | {f}"
        );
        assert!((rouge_l(&c, &f) - oracle::rouge_l(&c, &f, ROUGE_BETA)).abs() < 1e-12);
        for s in [bleu4(&c, &f), rouge_l(&c, &f), meteor_lite(&c, &f)] {
            assert!((0.0..=1.0).contains(&s));
        }
    }
}

#[test]
fn identity_and_disjoint() {
    let mut r = rng(33);
    for _ in 0..200 {
        let c = random_sentence(&mut r) + " " + &random_sentence(&mut r);
        assert!((rouge_l(&c, &c) - 1.0).abs() < 1e-12);
        assert!((meteor_lite(&c, &c) - 1.0).abs() < 1e-12);
        if oracle::words(&c).len() >= 4 {
            assert!((bleu4(&c, &c) - 1.0).abs() < 1e-6);
        }
        let disjoint = oracle::words(&c)
            .iter()
            .map(|w| format!("zz{w}q"))
            .collect::<Vec<_>>()
            .join(" ");
        assert!(bleu4(&c, &disjoint) < 1e-6);
        assert_eq!(rouge_l(&c, &disjoint), 0.0);
        assert_eq!(meteor_lite(&c, &disjoint), 0.0);
    }
}

#[test]
fn bleu_prefers_ordered_candidate() {
    let reference = "the small nodule in the left lung is stable";
    let shuffled = "stable lung the is nodule left in small the";
    assert!(bleu4(shuffled, reference) < bleu4(reference, reference));
}
