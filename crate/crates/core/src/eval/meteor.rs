//! METEOR without the synonym stage: exact matches first, then Porter-stem
//! matches among the remaining words, scored with the standard harmonic mean
//! and fragmentation penalty.

use porter_stemmer::stem;

use super::tokenize;

const ALPHA: f64 = 0.9;
const GAMMA: f64 = 0.5;
const BETA: f64 = 3.0;

/// Matched `(candidate index, reference index)` pairs, sorted by candidate index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    /// Runs of pairs adjacent in both sequences.
    pub fn chunks(&self) -> usize {
        if self.pairs.is_empty() {
            return 0;
        }
        1 + self
            .pairs
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count()
    }
}

/// Greedy one-to-one alignment. Each stage visits candidate words in order
/// and takes the reference word right after the previous word's partner if it
/// matches, else the first unused match.
pub fn meteor_alignment(cand: &[String], refr: &[String]) -> Alignment {
    let cand_stems: Vec<String> = cand.iter().map(|w| stem(w)).collect();
    let ref_stems: Vec<String> = refr.iter().map(|w| stem(w)).collect();
    let mut cand_partner: Vec<Option<usize>> = vec![None; cand.len()];
    let mut ref_used = vec![false; refr.len()];

    let stages: [(&[String], &[String]); 2] = [(cand, refr), (&cand_stems, &ref_stems)];
    for (c_words, r_words) in stages {
        for i in 0..cand.len() {
            if cand_partner[i].is_some() {
                continue;
            }
            let ok = |j: usize| !ref_used[j] && c_words[i] == r_words[j];
            let preferred = i
                .checked_sub(1)
                .and_then(|p| cand_partner[p])
                .map(|j| j + 1)
                .filter(|&j| j < refr.len() && ok(j));
            if let Some(j) = preferred.or_else(|| (0..refr.len()).find(|&j| ok(j))) {
                cand_partner[i] = Some(j);
                ref_used[j] = true;
            }
        }
    }
    Alignment {
        pairs: cand_partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| (i, j)))
            .collect(),
    }
}

/// `Fmean · (1 − γ·(chunks/m)^β)` with `Fmean = PR / (αP + (1−α)R)`.
/// Identical token sequences score exactly 1; empty inputs follow `rouge_l`.
pub fn meteor_lite(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    match (cand.is_empty(), refr.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    if cand == refr {
        return 1.0;
    }
    let alignment = meteor_alignment(&cand, &refr);
    let m = alignment.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refr.len() as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (alignment.chunks() as f64 / m as f64).powf(BETA);
    fmean * (1.0 - penalty)
}
