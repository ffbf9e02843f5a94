//! Pipeline configuration: one JSON or TOML document (chosen by extension).

use std::path::{Path, PathBuf};

use ctreport_core::attrx::{Connectivity, DiameterUnit};
use ctreport_core::encoder::LevelId;
use ctreport_core::maskex::DEFAULT_SPATIAL_GRID;
use ctreport_core::phantom::PhantomConfig;
use ctreport_core::prompt::PromptOptions;
use ctreport_core::reports::{Lexicon, MergeOptions};
use ctreport_core::volume::Dims;
use ctreport_core::{io_util, Grid, Region};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mask manifests, one per study.
    pub manifests: Vec<PathBuf>,
    /// Synthetic phantom studies generated in memory, processed after the
    /// manifests.
    pub phantoms: Vec<PhantomConfig>,
    /// CT volume overriding the manifest's `ct` entry (single-study runs only).
    pub volume: Option<PathBuf>,
    /// Projection weights to load; generated from `seed` when absent.
    pub weights: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// `[D, H, W]` the CT and masks are resized to.
    pub target_dims: Dims,
    pub grid: Grid,
    pub channels: usize,
    /// Number of representative slices; one per region.
    pub slices: usize,
    pub level_ids: Vec<LevelId>,
    /// Level whose tokens become the visual tokens; the last level by default.
    pub token_level: Option<LevelId>,
    pub spatial_grid: Dims,
    pub seed: u64,
    pub voxel_units: bool,
    pub connectivity: Connectivity,
    pub prompt: PromptOptions,
    pub completeness: bool,
    pub lexicon: Option<PathBuf>,
    /// Also write the encoder features of every study.
    pub save_features: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifests: Vec::new(),
            phantoms: Vec::new(),
            volume: None,
            weights: None,
            output_dir: PathBuf::from("out"),
            target_dims: Dims::new(32, 256, 256),
            grid: Grid::new(18, 18),
            channels: 64,
            slices: Region::COUNT,
            level_ids: vec![3, 6, 9, 12],
            token_level: None,
            spatial_grid: DEFAULT_SPATIAL_GRID,
            seed: 0,
            voxel_units: false,
            connectivity: Connectivity::TwentySix,
            prompt: PromptOptions::default(),
            completeness: false,
            lexicon: None,
            save_features: false,
        }
    }
}

/// Parses JSON, or TOML when the extension is `.toml`.
pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = io_util::read_to_string(path)?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Loads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = read_document(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifests = cfg.manifests.iter().map(|p| resolve(base, p)).collect();
        cfg.volume = cfg.volume.map(|p| resolve(base, &p));
        cfg.weights = cfg.weights.map(|p| resolve(base, &p));
        cfg.lexicon = cfg.lexicon.map(|p| resolve(base, &p));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        Ok(cfg)
    }

    pub fn token_level(&self) -> LevelId {
        self.token_level
            .or_else(|| self.level_ids.last().copied())
            .unwrap_or_default()
    }

    pub fn diameter_unit(&self) -> DiameterUnit {
        if self.voxel_units {
            DiameterUnit::Voxels
        } else {
            DiameterUnit::Millimeters
        }
    }

    pub fn merge_options(&self) -> MergeOptions {
        MergeOptions {
            completeness: self.completeness,
        }
    }

    pub fn load_lexicon(&self) -> Result<Option<Lexicon>, CliError> {
        Ok(self.lexicon.as_deref().map(Lexicon::load).transpose()?)
    }

    /// Checks every module precondition that can be checked before work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.manifests.is_empty() && self.phantoms.is_empty() {
            return bad("at least one manifest or phantom is required".into());
        }
        if self.volume.is_some() && (self.manifests.len() != 1 || !self.phantoms.is_empty()) {
            return bad("`volume` overrides the CT of a single study; list exactly one manifest".into());
        }
        let t = self.target_dims;
        if t.depth == 0 || t.height == 0 || t.width == 0 {
            return bad(format!("target_dims must be positive, got {t}"));
        }
        if self.grid.rows == 0 || self.grid.cols == 0 || self.grid.rows > t.height || self.grid.cols > t.width {
            return bad(format!(
                "grid {:?} must be non-empty and no finer than the {}x{} target slices",
                [self.grid.rows, self.grid.cols],
                t.height,
                t.width
            ));
        }
        if self.channels < 2 {
            return bad(format!("channels must be at least 2, got {}", self.channels));
        }
        if self.slices != Region::COUNT {
            return bad(format!(
                "slices must equal the number of regions ({}), got {}",
                Region::COUNT,
                self.slices
            ));
        }
        if self.grid.len() % self.slices != 0 {
            return bad(format!(
                "slices ({}) must divide the tokens per slice ({})",
                self.slices,
                self.grid.len()
            ));
        }
        if self.level_ids.is_empty() {
            return bad("level_ids must not be empty".into());
        }
        let mut sorted = self.level_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.level_ids.len() {
            return bad(format!("level_ids contain duplicates: {:?}", self.level_ids));
        }
        if !self.level_ids.contains(&self.token_level()) {
            return bad(format!(
                "token_level {} is not one of level_ids {:?}",
                self.token_level(),
                self.level_ids
            ));
        }
        if self.spatial_grid.voxel_count() == 0 {
            return bad(format!("spatial_grid must be positive, got {}", self.spatial_grid));
        }
        self.prompt.validate()?;
        for m in &self.manifests {
            if !m.is_file() {
                return Err(CliError::Missing(m.clone()));
            }
        }
        for p in self.volume.iter().chain(&self.weights).chain(&self.lexicon) {
            if !p.is_file() {
                return Err(CliError::Missing(p.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = PipelineConfig::default();
        assert_eq!(c.target_dims, Dims::new(32, 256, 256));
        assert_eq!(c.grid.len(), 324);
        assert_eq!(c.token_level(), 12);
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        let t = dir.path().join("c.toml");
        std::fs::write(&j, r#"{"manifests": ["m.json"], "grid": [6, 6], "voxel_units": true}"#).unwrap();
        std::fs::write(&t, "manifests = [\"m.json\"]\ngrid = [6, 6]\nvoxel_units = true\n").unwrap();
        let a = PipelineConfig::load(&j).unwrap();
        let b = PipelineConfig::load(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.manifests, vec![dir.path().join("m.json")]);
    }

    #[test]
    fn validation_messages() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(&m, "{}").unwrap();
        let ok = PipelineConfig {
            manifests: vec![m],
            ..PipelineConfig::default()
        };
        assert!(ok.validate().is_ok());
        let cases = [
            PipelineConfig {
                slices: 5,
                ..ok.clone()
            },
            PipelineConfig {
                grid: Grid::new(5, 5),
                ..ok.clone()
            },
            PipelineConfig {
                level_ids: vec![1, 1],
                ..ok.clone()
            },
            PipelineConfig {
                token_level: Some(99),
                ..ok.clone()
            },
            PipelineConfig {
                manifests: vec![],
                ..ok.clone()
            },
            PipelineConfig {
                volume: Some(dir.path().join("m.json")),
                phantoms: vec![PhantomConfig::default()],
                ..ok.clone()
            },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(CliError::Config(_))), "{c:?}");
        }
        let missing = PipelineConfig {
            weights: Some(dir.path().join("nope.json")),
            ..ok
        };
        assert!(matches!(missing.validate(), Err(CliError::Missing(_))));
    }
}
