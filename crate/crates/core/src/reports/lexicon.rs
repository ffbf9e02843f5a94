//! Keyword lexicon for assigning report sentences to regions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::io_util;
use crate::region::Region;

const LEXICON_V1_JSON: &str = include_str!("../../data/region_lexicon.v1.json");

/// The bundled lexicon.
pub static LEXICON_V1: LazyLock<Lexicon> =
    LazyLock::new(|| Lexicon::from_json(LEXICON_V1_JSON).expect("bundled lexicon is valid"));

/// Keyword phrases per region, stored as lowercase word sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    keywords: [Vec<Vec<String>>; 6],
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Lexicon {
    /// Parses `{"<region id>": ["keyword", ...]}`. Regions may be omitted.
    pub fn from_json(text: &str) -> Result<Lexicon> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::SchemaViolation(format!("lexicon: {e}")))?;
        let mut keywords: [Vec<Vec<String>>; 6] = Default::default();
        for (key, list) in raw {
            let region = key
                .parse::<u8>()
                .ok()
                .and_then(Region::from_id)
                .ok_or_else(|| Error::SchemaViolation(format!("lexicon: unknown region key {key:?}")))?;
            for kw in list {
                let w = words(&kw);
                if w.is_empty() {
                    return Err(Error::SchemaViolation(format!("lexicon: keyword {kw:?} has no words")));
                }
                keywords[region.index()].push(w);
            }
        }
        Ok(Lexicon { keywords })
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        Lexicon::from_json(&io_util::read_to_string(path)?)
    }

    /// Keyword-phrase occurrences of each region in `sentence`.
    pub fn hits(&self, sentence: &str) -> [usize; 6] {
        let tokens = words(sentence);
        let mut out = [0; 6];
        for (slot, phrases) in out.iter_mut().zip(&self.keywords) {
            *slot = phrases
                .iter()
                .map(|p| tokens.windows(p.len()).filter(|w| *w == p.as_slice()).count())
                .sum();
        }
        out
    }

    /// Region with the most hits (lowest id on ties), `None` without hits.
    pub fn classify(&self, sentence: &str) -> Option<Region> {
        let hits = self.hits(sentence);
        let (best, &n) = hits.iter().enumerate().rev().max_by_key(|(_, n)| **n)?;
        (n > 0).then(|| Region::ALL[best])
    }
}
