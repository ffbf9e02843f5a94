//! Prompt assembly: the fixed multimodal layout handed to the language model.
//!
//! A bundle is a flat list of segments. With the default order the layout is
//! preamble, visual tokens, six `<region i>` labels each followed by that
//! region's mask and spatial tokens, attribute text, instruction. The layout
//! never depends on which masks are positive.
//!
//! Token payloads are not copied into the bundle. Each token segment carries a
//! SHA-256 digest of its payload so that distinct inputs give distinct bundles.

mod attr_text;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use attr_text::{format_one_decimal, parse_attribute_report, render_attribute_report, ParsedAttributes};

use crate::error::{Error, Result};
use crate::io_util;
use crate::maskex::SegmentationTokenSet;
use crate::r2pool::TokenSequence;
use crate::region::Region;

pub const DEFAULT_TOKEN_BUDGET: usize = 2048;
pub const DEFAULT_PREAMBLE: &str =
    "You are a radiologist reading a chest CT. Image tokens and segmentation tokens for six anatomical regions follow.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Text,
    VisionTokens,
    SegToken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    Preamble,
    RegionLabel,
    Attributes,
    Instruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegSlot {
    Mask,
    Spatial,
}

impl SegSlot {
    fn code(self) -> char {
        match self {
            SegSlot::Mask => 'm',
            SegSlot::Spatial => 's',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Text {
        role: TextRole,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<Region>,
        text: String,
    },
    VisionTokens {
        study_id: String,
        count: usize,
        channels: usize,
        level_id: u32,
        sha256: String,
    },
    SegToken {
        region: Region,
        slot: SegSlot,
        positive: bool,
        channels: usize,
        sha256: String,
    },
}

impl Segment {
    pub fn kind(&self) -> SegmentKind {
        match self {
            Segment::Text { .. } => SegmentKind::Text,
            Segment::VisionTokens { .. } => SegmentKind::VisionTokens,
            Segment::SegToken { .. } => SegmentKind::SegToken,
        }
    }

    /// Placeholders for token segments, whitespace-separated words for text.
    pub fn token_count(&self) -> usize {
        match self {
            Segment::Text { text, .. } => text.split_whitespace().count(),
            Segment::VisionTokens { count, .. } => *count,
            Segment::SegToken { .. } => 1,
        }
    }

    fn write_text(&self, out: &mut String) {
        match self {
            Segment::Text { text, .. } => out.push_str(text),
            Segment::VisionTokens { count, .. } => {
                for k in 0..*count {
                    let _ = write!(out, "<img:{k}>");
                }
            }
            Segment::SegToken { region, slot, .. } => {
                let _ = write!(out, "<seg:{}:{}>", region.id(), slot.code());
            }
        }
    }
}

/// The three model inputs whose relative order is configurable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPart {
    Vision,
    Segmentation,
    Attributes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptOptions {
    pub order: [PromptPart; 3],
    pub budget: usize,
    pub preamble: String,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            order: [PromptPart::Vision, PromptPart::Segmentation, PromptPart::Attributes],
            budget: DEFAULT_TOKEN_BUDGET,
            preamble: DEFAULT_PREAMBLE.to_owned(),
        }
    }
}

impl PromptOptions {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.order;
        if a == b || b == c || a == c {
            return Err(Error::InvalidConfig(format!(
                "prompt order must name vision, segmentation and attributes once each, got {:?}",
                self.order
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("prompt budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptBundle {
    pub study_id: String,
    pub region_id: Region,
    pub instruction: String,
    pub attr_text: String,
    pub segments: Vec<Segment>,
}

pub fn instruction_for(region: Region) -> String {
    format!("Describe findings for {}.", region.name())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn digest_f32s(hasher: &mut Sha256, values: &[f32]) {
    hasher.update((values.len() as u64).to_le_bytes());
    for v in values {
        hasher.update(v.to_le_bytes());
    }
}

/// Digest over the token values, shape, level, selection and layout.
pub fn token_sequence_digest(tokens: &TokenSequence) -> String {
    let mut h = Sha256::new();
    h.update(tokens.study_id.as_bytes());
    h.update([0]);
    h.update(tokens.level_id.to_le_bytes());
    for m in [&tokens.global, &tokens.region] {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        digest_f32s(&mut h, m.as_slice());
    }
    // Serializing these plain structs cannot fail.
    h.update(serde_json::to_vec(&tokens.selected_slices).unwrap_or_default());
    h.update(serde_json::to_vec(&tokens.layout).unwrap_or_default());
    hex(&h.finalize())
}

fn digest_token(values: &[f32]) -> String {
    let mut h = Sha256::new();
    digest_f32s(&mut h, values);
    hex(&h.finalize())
}

/// Lays out one region's prompt. Fails with `StudyMismatch` when the visual
/// and segmentation tokens name different studies, and with `BudgetExceeded`
/// when placeholders plus text words exceed `opts.budget`.
pub fn build_prompt(
    tokens: &TokenSequence,
    segtoks: &SegmentationTokenSet,
    attr_text: &str,
    region_id: Region,
    opts: &PromptOptions,
) -> Result<PromptBundle> {
    opts.validate()?;
    if tokens.study_id != segtoks.study_id {
        return Err(Error::StudyMismatch(format!(
            "visual tokens from {:?}, segmentation tokens from {:?}",
            tokens.study_id, segtoks.study_id
        )));
    }
    let order: Vec<Region> = segtoks.entries.iter().map(|e| e.region).collect();
    if order != Region::ALL {
        return Err(Error::SchemaViolation(
            "segmentation tokens must list regions 1..6 in order".into(),
        ));
    }

    let instruction = instruction_for(region_id);
    let mut segments = vec![Segment::Text {
        role: TextRole::Preamble,
        region: None,
        text: opts.preamble.clone(),
    }];
    for part in opts.order {
        match part {
            PromptPart::Vision => segments.push(Segment::VisionTokens {
                study_id: tokens.study_id.clone(),
                count: tokens.len(),
                channels: tokens.channels(),
                level_id: tokens.level_id,
                sha256: token_sequence_digest(tokens),
            }),
            PromptPart::Segmentation => {
                for e in &segtoks.entries {
                    segments.push(Segment::Text {
                        role: TextRole::RegionLabel,
                        region: Some(e.region),
                        text: format!("<region {}>", e.region.id()),
                    });
                    for (slot, values) in [(SegSlot::Mask, &e.mask_token), (SegSlot::Spatial, &e.spatial_token)] {
                        segments.push(Segment::SegToken {
                            region: e.region,
                            slot,
                            positive: e.positive,
                            channels: values.len(),
                            sha256: digest_token(values),
                        });
                    }
                }
            }
            PromptPart::Attributes => segments.push(Segment::Text {
                role: TextRole::Attributes,
                region: None,
                text: attr_text.to_owned(),
            }),
        }
    }
    segments.push(Segment::Text {
        role: TextRole::Instruction,
        region: Some(region_id),
        text: instruction.clone(),
    });

    let bundle = PromptBundle {
        study_id: tokens.study_id.clone(),
        region_id,
        instruction,
        attr_text: attr_text.to_owned(),
        segments,
    };
    let needed = bundle.token_count();
    if needed > opts.budget {
        return Err(Error::BudgetExceeded {
            needed,
            budget: opts.budget,
        });
    }
    Ok(bundle)
}

/// Prompts for all six regions, in canonical order.
pub fn build_all_prompts(
    tokens: &TokenSequence,
    segtoks: &SegmentationTokenSet,
    attr_text: &str,
    opts: &PromptOptions,
) -> Result<Vec<PromptBundle>> {
    Region::ALL
        .iter()
        .map(|&r| build_prompt(tokens, segtoks, attr_text, r, opts))
        .collect()
}

impl PromptBundle {
    pub fn kinds(&self) -> Vec<SegmentKind> {
        self.segments.iter().map(Segment::kind).collect()
    }

    /// Visual placeholders + 12 segmentation placeholders + text words.
    pub fn token_count(&self) -> usize {
        self.segments.iter().map(Segment::token_count).sum()
    }

    /// Text-only rendering: token segments become `<img:k>` and
    /// `<seg:r:m>` / `<seg:r:s>` placeholders, segments are newline-joined.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            s.write_text(&mut out);
        }
        out
    }

    /// One JSON object per segment, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            // Segment holds only strings, integers and enums.
            out.push_str(&serde_json::to_string(s).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<PromptBundle> {
        let segments = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<Segment>(l)
                    .map_err(|e| Error::SchemaViolation(format!("prompt segment {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let study_id = segments.iter().find_map(|s| match s {
            Segment::VisionTokens { study_id, .. } => Some(study_id.clone()),
            _ => None,
        });
        let text_of = |want: TextRole| {
            segments.iter().find_map(|s| match s {
                Segment::Text { role, region, text } if *role == want => Some((*region, text.clone())),
                _ => None,
            })
        };
        let (region, instruction) = text_of(TextRole::Instruction)
            .ok_or_else(|| Error::SchemaViolation("prompt has no instruction segment".into()))?;
        let region_id = region.ok_or_else(|| Error::SchemaViolation("instruction segment has no region".into()))?;
        let attr_text = text_of(TextRole::Attributes).map(|(_, t)| t).unwrap_or_default();
        let study_id = study_id.ok_or_else(|| Error::SchemaViolation("prompt has no vision_tokens segment".into()))?;
        Ok(PromptBundle {
            study_id,
            region_id,
            instruction,
            attr_text,
            segments,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<PromptBundle> {
        PromptBundle::from_jsonl(&io_util::read_to_string(path)?)
    }
}
