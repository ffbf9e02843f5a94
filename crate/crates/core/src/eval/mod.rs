//! Report-level NLG metrics: sentence BLEU-4, ROUGE-L and a METEOR variant
//! without synonym matching. All scores lie in `[0, 1]`.
//!
//! Texts are compared as lowercase word tokens; every non-alphanumeric
//! character separates tokens.

mod bleu;
mod meteor;
mod rouge;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bleu::{bleu4, bleu4_with, BleuSmoothing, BLEU_EPSILON};
pub use meteor::{meteor_alignment, meteor_lite, Alignment};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};

use crate::error::{Error, Result};
use crate::io_util;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextPair {
    pub candidate: String,
    pub reference: String,
}

pub fn parse_pairs_jsonl(text: &str) -> Result<Vec<TextPair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::SchemaViolation(format!("pairs line {}: {e}", i + 1))))
        .collect()
}

pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<TextPair>> {
    parse_pairs_jsonl(&io_util::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    /// Arithmetic mean of `per_pair` (zeros when `n == 0`).
    pub corpus: PairScores,
    pub per_pair: Vec<PairScores>,
}

pub fn score_pair(candidate: &str, reference: &str, smoothing: BleuSmoothing) -> PairScores {
    PairScores {
        bleu4: bleu4_with(candidate, reference, smoothing),
        rouge_l: rouge_l(candidate, reference),
        meteor_lite: meteor_lite(candidate, reference),
    }
}

pub fn evaluate(pairs: &[TextPair], smoothing: BleuSmoothing) -> MetricReport {
    let per_pair: Vec<PairScores> = pairs
        .par_iter()
        .map(|p| score_pair(&p.candidate, &p.reference, smoothing))
        .collect();
    let n = per_pair.len();
    let mut corpus = PairScores::default();
    if n > 0 {
        let mean = |f: fn(&PairScores) -> f64| per_pair.iter().map(f).sum::<f64>() / n as f64;
        corpus = PairScores {
            bleu4: mean(|s| s.bleu4),
            rouge_l: mean(|s| s.rouge_l),
            meteor_lite: mean(|s| s.meteor_lite),
        };
    }
    MetricReport { n, corpus, per_pair }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        assert_eq!(
            tokenize("The heart, e.g. size-normal!"),
            ["the", "heart", "e", "g", "size", "normal"]
        );
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn corpus_mean() {
        let pairs = parse_pairs_jsonl(
            "{\"candidate\":\"a b c d\",\"reference\":\"a b c d\"}\n{\"candidate\":\"x\",\"reference\":\"y\"}\n",
        )
        .unwrap();
        let r = evaluate(&pairs, BleuSmoothing::default());
        assert_eq!(r.n, 2);
        assert!((r.corpus.rouge_l - 0.5).abs() < 1e-12);
        assert!((r.corpus.meteor_lite - 0.5).abs() < 1e-12);
        assert_eq!(evaluate(&[], BleuSmoothing::default()).corpus, PairScores::default());
    }
}
