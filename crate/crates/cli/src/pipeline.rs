//! End-to-end run: manifest in, tokens, segmentation tokens, attributes and
//! six prompt bundles out.

use std::path::{Path, PathBuf};

use ctreport_core::attrx::{extract_attributes, AttrOptions, PatientAttributes};
use ctreport_core::encoder::{save_features, stub_encode_volume, StubEncoderConfig};
use ctreport_core::maskex::{segmentation_tokens, ProjectionWeights, SegmentationTokenSet};
use ctreport_core::phantom::make_phantom;
use ctreport_core::prompt::{build_all_prompts, render_attribute_report, PromptBundle};
use ctreport_core::r2pool::{r2_pool, save_token_sequence, select_region_slices, TokenSequence};
use ctreport_core::volume::{load_study, load_volume, Study};
use ctreport_core::{io_util, Region};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::CliError;

pub const WEIGHTS_FILE: &str = "weights.json";
pub const TOKENS_FILE: &str = "tokens.json";
pub const SEGTOK_FILE: &str = "segtok.json";
pub const ATTRIBUTES_FILE: &str = "attributes.json";
pub const ATTRIBUTES_TEXT_FILE: &str = "attributes.txt";
pub const FEATURES_FILE: &str = "features.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn prompt_file_name(region: Region) -> String {
    format!("prompt_region_{}.jsonl", region.id())
}

/// Counts recorded per study in `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub vision_tokens: usize,
    pub seg_tokens: usize,
    pub prompts: usize,
    pub prompt_tokens: Vec<usize>,
    pub selected_slices: Vec<usize>,
}

/// Everything produced for one study, before it is written.
pub struct StudyOutputs {
    pub tokens: TokenSequence,
    pub segtoks: SegmentationTokenSet,
    pub attributes: PatientAttributes,
    pub attr_text: String,
    pub prompts: Vec<PromptBundle>,
}

impl StudyOutputs {
    pub fn summary(&self) -> StudySummary {
        StudySummary {
            study_id: self.tokens.study_id.clone(),
            vision_tokens: self.tokens.len(),
            seg_tokens: self.segtoks.token_count(),
            prompts: self.prompts.len(),
            prompt_tokens: self.prompts.iter().map(PromptBundle::token_count).collect(),
            selected_slices: self.tokens.selected_slices.iter().map(|s| s.slice).collect(),
        }
    }
}

pub fn load_or_make_weights(cfg: &PipelineConfig) -> Result<ProjectionWeights, CliError> {
    match &cfg.weights {
        Some(p) => {
            let w = ProjectionWeights::load(p)?;
            if w.channels != cfg.channels || w.level_ids != cfg.level_ids || w.spatial_grid != cfg.spatial_grid {
                return Err(CliError::Config(format!(
                    "{} was made for C={}, levels {:?}, spatial grid {}, but the config asks for C={}, levels {:?}, spatial grid {}",
                    p.display(),
                    w.channels,
                    w.level_ids,
                    w.spatial_grid,
                    cfg.channels,
                    cfg.level_ids,
                    cfg.spatial_grid
                )));
            }
            Ok(w)
        }
        None => Ok(ProjectionWeights::seeded(
            cfg.level_ids.clone(),
            cfg.channels,
            cfg.spatial_grid,
            cfg.seed,
        )?),
    }
}

fn encoder_config(cfg: &PipelineConfig) -> StubEncoderConfig {
    StubEncoderConfig {
        grid: cfg.grid,
        channels: cfg.channels,
        level_ids: cfg.level_ids.clone(),
    }
}

/// Runs every stage for one loaded study. Attributes are measured on the
/// masks at their original resolution and spacing; tokens use the resized
/// study.
pub fn process_study(
    study: &Study,
    cfg: &PipelineConfig,
    weights: &ProjectionWeights,
    features_out: Option<&Path>,
) -> Result<StudyOutputs, CliError> {
    let attributes = extract_attributes(
        &study.masks,
        study.masks.spacing(),
        AttrOptions {
            connectivity: cfg.connectivity,
            unit: cfg.diameter_unit(),
        },
    );
    let attr_text = render_attribute_report(&attributes);

    let pre = study.preprocess(cfg.target_dims)?;
    let stack = stub_encode_volume(&pre.ct, &encoder_config(cfg))?;
    if let Some(p) = features_out {
        save_features(&stack, p)?;
    }
    let selection = select_region_slices(&pre.masks);
    let tokens = r2_pool(&stack, &selection, cfg.token_level())?.with_study_id(&study.id);
    let mut segtoks = segmentation_tokens(&pre.masks, &stack, &selection, weights)?;
    segtoks.study_id = study.id.clone();
    let prompts = build_all_prompts(&tokens, &segtoks, &attr_text, &cfg.prompt)?;
    Ok(StudyOutputs {
        tokens,
        segtoks,
        attributes,
        attr_text,
        prompts,
    })
}

pub fn write_study_outputs(out: &StudyOutputs, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    save_token_sequence(&out.tokens, &dir.join(TOKENS_FILE))?;
    out.segtoks.save(&dir.join(SEGTOK_FILE))?;
    io_util::write_json(&dir.join(ATTRIBUTES_FILE), &out.attributes)?;
    io_util::write_atomic(
        &dir.join(ATTRIBUTES_TEXT_FILE),
        format!("{}\n", out.attr_text).as_bytes(),
    )?;
    for b in &out.prompts {
        b.save(&dir.join(prompt_file_name(b.region_id)))?;
    }
    io_util::write_json(&dir.join(SUMMARY_FILE), &out.summary())?;
    Ok(())
}

fn load_configured_study(manifest: &Path, cfg: &PipelineConfig) -> Result<Study, CliError> {
    let mut study = load_study(manifest)?;
    if let Some(v) = &cfg.volume {
        let ct = load_volume(v)?;
        study.masks.validate_against(&ct)?;
        study.ct = ct;
    }
    Ok(study)
}

/// Validates the config, then processes every study (in parallel) and writes
/// `<output_dir>/<study id>/...` plus the shared weights. Returns the study
/// directories in input order (manifests, then phantoms).
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<(StudySummary, PathBuf)>, CliError> {
    cfg.validate()?;
    cfg.load_lexicon()?;
    let weights = load_or_make_weights(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    weights.save(&cfg.output_dir.join(WEIGHTS_FILE))?;

    let mut studies = cfg
        .manifests
        .iter()
        .map(|m| load_configured_study(m, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &cfg.phantoms {
        studies.push(make_phantom(p)?);
    }
    let mut ids: Vec<&str> = studies.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Config(format!("two studies share the id {:?}", w[0])));
    }

    studies
        .par_iter()
        .map(|study| {
            let dir = cfg.output_dir.join(&study.id);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let features = cfg.save_features.then(|| dir.join(FEATURES_FILE));
            let out = process_study(study, cfg, &weights, features.as_deref())?;
            write_study_outputs(&out, &dir)?;
            tracing::info!(study = %study.id, dir = %dir.display(), "study written");
            Ok((out.summary(), dir))
        })
        .collect()
}
