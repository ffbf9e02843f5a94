//! Six-region report structuring: split reference reports by region and merge
//! region reports back into one document with fixed section headers.

mod lexicon;
mod sentences;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lexicon::{Lexicon, LEXICON_V1};
pub use sentences::split_sentences;

use crate::error::{Error, Result};
use crate::io_util;
use crate::region::Region;

const UNREMARKABLE: &str = "Unremarkable.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSource {
    Labeled,
    Lexicon,
    Merged,
}

/// Sentences grouped by region; index `i` holds region `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub source: ReportSource,
    pub regions: [Vec<String>; 6],
}

impl StructuredReport {
    pub fn empty(source: ReportSource) -> Self {
        StructuredReport {
            source,
            regions: Default::default(),
        }
    }

    pub fn sentences(&self, r: Region) -> &[String] {
        &self.regions[r.index()]
    }

    /// Region sentences joined by single spaces (empty if none).
    pub fn text(&self, r: Region) -> String {
        self.regions[r.index()].join(" ")
    }

    pub fn push(&mut self, r: Region, sentence: impl Into<String>) {
        self.regions[r.index()].push(sentence.into());
    }

    pub fn all_sentences(&self) -> impl Iterator<Item = &String> {
        self.regions.iter().flatten()
    }
}

/// One line of a labeled corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSentence {
    pub sentence: String,
    pub region: Region,
}

pub fn read_labeled_jsonl(path: &Path) -> Result<Vec<LabeledSentence>> {
    parse_labeled_jsonl(&io_util::read_to_string(path)?)
}

pub fn parse_labeled_jsonl(text: &str) -> Result<Vec<LabeledSentence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::SchemaViolation(format!("labeled line {}: {e}", i + 1)))
        })
        .collect()
}

/// Groups already-labeled sentences by region, keeping their order.
pub fn group_labeled(items: &[LabeledSentence]) -> StructuredReport {
    let mut out = StructuredReport::empty(ReportSource::Labeled);
    for it in items {
        out.push(it.region, it.sentence.trim());
    }
    out
}

/// Splits `text` into sentences and assigns each to a region, either from
/// `labels` (one per sentence) or by lexicon scoring.
pub fn split_report(text: &str, labels: Option<&[Region]>, lexicon: &Lexicon) -> Result<StructuredReport> {
    let sentences = split_sentences(text);
    match labels {
        Some(labels) => {
            if labels.len() != sentences.len() {
                return Err(Error::LabelCountMismatch {
                    sentences: sentences.len(),
                    labels: labels.len(),
                });
            }
            let mut out = StructuredReport::empty(ReportSource::Labeled);
            for (s, &r) in sentences.into_iter().zip(labels) {
                out.push(r, s);
            }
            Ok(out)
        }
        None => {
            let mut out = StructuredReport::empty(ReportSource::Lexicon);
            let mut previous = Region::Lung;
            for s in sentences {
                let region = lexicon.classify(&s).unwrap_or(previous);
                out.push(region, s);
                previous = region;
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeOptions {
    /// Emit `"<header> Unremarkable."` for regions with no text.
    pub completeness: bool,
}

/// One line per region in canonical order: `"<header> <text>"`.
pub fn merge_reports(report: &StructuredReport, opts: MergeOptions) -> String {
    let mut lines = Vec::new();
    for r in Region::ALL {
        let text = report.text(r);
        if !text.is_empty() {
            lines.push(format!("{} {text}", r.header()));
        } else if opts.completeness {
            lines.push(format!("{} {UNREMARKABLE}", r.header()));
        }
    }
    lines.join("\n")
}

/// Inverse of [`merge_reports`]. Lines that do not start with a section
/// header continue the previous section.
pub fn parse_merged_report(text: &str) -> Result<StructuredReport> {
    let mut out = StructuredReport::empty(ReportSource::Merged);
    let mut current: Option<Region> = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (region, body) = match Region::ALL
            .iter()
            .find_map(|&r| line.strip_prefix(r.header()).map(|b| (r, b)))
        {
            Some(hit) => hit,
            None => {
                let r = current.ok_or_else(|| {
                    Error::SchemaViolation(format!("merged report line {line:?} precedes any section header"))
                })?;
                (r, line)
            }
        };
        current = Some(region);
        out.regions[region.index()].extend(split_sentences(body));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_single_keyword() {
        let r = split_report("Heart size is normal.", None, &LEXICON_V1).unwrap();
        assert_eq!(r.sentences(Region::HeartGreatVessels), ["Heart size is normal."]);
    }

    #[test]
    fn labeled_grouping() {
        let text = "First one. Second one. Third one.";
        let labels = [Region::Lung, Region::Lung, Region::UpperAbdomen];
        let r = split_report(text, Some(&labels), &LEXICON_V1).unwrap();
        assert_eq!(r.sentences(Region::Lung), ["First one.", "Second one."]);
        assert_eq!(r.sentences(Region::UpperAbdomen), ["Third one."]);
        assert!(matches!(
            split_report(text, Some(&labels[..2]), &LEXICON_V1),
            Err(Error::LabelCountMismatch {
                sentences: 3,
                labels: 2
            })
        ));
    }

    #[test]
    fn carry_over_and_default() {
        let r = split_report("No change. The trachea is patent. No other finding.", None, &LEXICON_V1).unwrap();
        assert_eq!(r.sentences(Region::Lung), ["No change."]);
        assert_eq!(
            r.sentences(Region::LargeAirways),
            ["The trachea is patent.", "No other finding."]
        );
    }

    #[test]
    fn tie_goes_to_lower_region() {
        // one hit each for lung ("nodule") and upper abdomen ("liver")
        let r = split_report("Liver nodule.", None, &LEXICON_V1).unwrap();
        assert_eq!(r.sentences(Region::Lung), ["Liver nodule."]);
    }

    #[test]
    fn merge_layout() {
        let mut r = StructuredReport::empty(ReportSource::Labeled);
        for reg in Region::ALL {
            r.push(reg, format!("Finding {}.", reg.id()));
        }
        let merged = merge_reports(&r, MergeOptions::default());
        let headers: Vec<&str> = merged.lines().map(|l| l.split_once(':').unwrap().0).collect();
        assert_eq!(
            headers,
            [
                "Lungs",
                "Large airways",
                "Mediastinum",
                "Heart and great vessels",
                "Osseous structures",
                "Upper abdomen"
            ]
        );
        let back = parse_merged_report(&merged).unwrap();
        assert_eq!(back.regions, r.regions);
    }

    #[test]
    fn completeness() {
        let empty = StructuredReport::empty(ReportSource::Labeled);
        assert_eq!(merge_reports(&empty, MergeOptions::default()), "");
        let all = merge_reports(&empty, MergeOptions { completeness: true });
        assert_eq!(all.lines().count(), 6);
        assert!(all.lines().all(|l| l.ends_with(": Unremarkable.")));
    }

    #[test]
    fn labeled_jsonl() {
        let items =
            parse_labeled_jsonl("{\"sentence\": \"A b.\", \"region\": 2}\n\n{\"sentence\": \"C.\", \"region\": 6}\n")
                .unwrap();
        let r = group_labeled(&items);
        assert_eq!(r.sentences(Region::LargeAirways), ["A b."]);
        assert!(parse_labeled_jsonl("{\"sentence\": \"A\", \"region\": 7}").is_err());
    }
}
