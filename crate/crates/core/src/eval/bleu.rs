use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize;

pub const BLEU_EPSILON: f64 = 1e-9;

/// How zero n-gram matches are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BleuSmoothing {
    /// A zero match count becomes `BLEU_EPSILON`; an empty n-gram total counts as 1.
    #[default]
    Epsilon,
    /// Add one to matches and totals for n ≥ 2.
    AddOne,
    /// Unsmoothed: any zero precision gives a score of 0.
    None,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    bleu4_with(candidate, reference, BleuSmoothing::Epsilon)
}

/// Sentence BLEU: geometric mean of clipped 1..4-gram precisions times the
/// brevity penalty `min(1, exp(1 - r/c))`. An empty candidate scores 0.
pub fn bleu4_with(candidate: &str, reference: &str, smoothing: BleuSmoothing) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let c_counts = ngram_counts(&cand, n);
        let r_counts = ngram_counts(&refr, n);
        let matches: usize = c_counts
            .iter()
            .map(|(g, &k)| k.min(r_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let p = match smoothing {
            BleuSmoothing::Epsilon => (matches as f64).max(BLEU_EPSILON) / total.max(1) as f64,
            BleuSmoothing::AddOne if n > 1 => (matches + 1) as f64 / (total + 1) as f64,
            _ if total == 0 || matches == 0 => return 0.0,
            _ => matches as f64 / total as f64,
        };
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
}
