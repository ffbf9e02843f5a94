use super::tokenize;

pub const ROUGE_BETA: f64 = 1.2;

/// Longest common subsequence length (two-row dynamic programme).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with recall weighted by `ROUGE_BETA`. Two empty texts score
/// 1, one empty text scores 0.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    match (cand.is_empty(), refr.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_len(&cand, &refr);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / refr.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let (p, r, b2) = (0.5, 2.0 / 3.0, 1.44);
        let expected = (1.0 + b2) * p * r / (r + b2 * p);
        assert!((rouge_l("a b c d", "a x c") - expected).abs() < 1e-12);
        assert!((expected - 0.586_538_461_5).abs() < 1e-9);
    }

    #[test]
    fn boundaries() {
        assert_eq!(rouge_l("", ""), 1.0);
        assert_eq!(rouge_l("", "a"), 0.0);
        assert_eq!(rouge_l("a", ""), 0.0);
        assert_eq!(rouge_l("a b", "c d"), 0.0);
        assert!((rouge_l("a b c", "a b c") - 1.0).abs() < 1e-12);
    }
}
