//! Sentence segmentation: a period followed by whitespace ends a sentence
//! unless the word it closes is a known abbreviation.

const ABBREVIATIONS: &[&str] = &[
    "approx.", "dr.", "e.g.", "i.e.", "fig.", "vs.", "cf.", "resp.", "max.", "min.", "ca.", "mr.", "mrs.",
];

fn ends_with_abbreviation(text: &str) -> bool {
    let word = text.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(['(', '[', '"']);
    ABBREVIATIONS.iter().any(|a| word.eq_ignore_ascii_case(a))
}

/// Sentences in order, trimmed, each keeping its terminal period.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '.' {
            continue;
        }
        let next_is_space = chars.peek().is_some_and(|(_, n)| n.is_whitespace());
        if next_is_space && !ends_with_abbreviation(&text[start..=i]) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s.to_owned());
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}
