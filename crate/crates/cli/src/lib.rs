//! `ctreport` command-line front end. Each subcommand maps onto one chain of
//! library calls; `pipeline` runs them all.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctreport_core::attrx::{extract_attributes, AttrOptions, Connectivity, DiameterUnit};
use ctreport_core::encoder::{
    load_precomputed_features, save_features, stub_encode_volume, LevelId, StubEncoderConfig,
};
use ctreport_core::eval::{evaluate, read_pairs_jsonl, BleuSmoothing};
use ctreport_core::maskex::{segmentation_tokens, ProjectionWeights, SegmentationTokenSet};
use ctreport_core::phantom::{make_phantom, PhantomConfig};
use ctreport_core::prompt::{build_all_prompts, build_prompt, render_attribute_report, PromptBundle, PromptOptions};
use ctreport_core::r2pool::{load_token_sequence, r2_pool, save_token_sequence, select_region_slices};
use ctreport_core::reports::{
    group_labeled, merge_reports, read_labeled_jsonl, split_report, Lexicon, MergeOptions, ReportSource,
    StructuredReport, LEXICON_V1,
};
use ctreport_core::volume::{load_mask_set, load_study, load_volume, normalize_minmax, Dims, Spacing};
use ctreport_core::{io_util, Grid, Region};
use ctreport_llm::{EndpointConfig, LlmClient, LlmError};

use crate::config::{read_document, PipelineConfig};
use crate::pipeline::{prompt_file_name, run_pipeline};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ctreport_core::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for filesystem and network failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Missing(_) | CliError::Io { .. } => 2,
            CliError::Llm(LlmError::Timeout { .. } | LlmError::Transport { .. } | LlmError::HttpError { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ctreport",
    version,
    about = "Region-focused chest CT report generation pipeline"
)]
pub struct Cli {
    /// Seed for every stochastic default (projection weights, phantom noise).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-study and per-region parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a study's CT and resize CT and masks to the target grid.
    Ingest(IngestArgs),
    /// Encode a normalized CT volume into per-slice multi-level tokens.
    Encode(EncodeArgs),
    /// R² pooling: D global plus T region tokens from encoder features.
    Pool(PoolArgs),
    /// Mask and spatial tokens for the six region masks.
    Segtok(SegtokArgs),
    /// Organ volumes and lesion count, diameters and location.
    Attrs(AttrsArgs),
    /// Assemble prompt bundles from tokens, segmentation tokens and attributes.
    Prompt(PromptArgs),
    /// Split a report into the six regions.
    SplitReport(SplitArgs),
    /// Merge a structured report into one text with section headers.
    MergeReport(MergeArgs),
    /// BLEU-4, ROUGE-L and METEOR-lite over candidate/reference pairs.
    Eval(EvalArgs),
    /// Run ingest through prompt assembly for every study in a config.
    Pipeline(PipelineArgs),
    /// Send prompt bundles to a text-generation endpoint and merge the replies.
    Generate(GenerateArgs),
    /// Write the synthetic phantom study.
    #[command(hide = true)]
    MakePhantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Mask manifest naming the CT and the region, lesion and organ masks.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the preprocessed study.
    #[arg(long)]
    pub out: PathBuf,
    /// Target size as D,H,W.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [32, 256, 256])]
    pub target: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// CT volume (NIfTI or raw container), already normalized to [0, 1].
    #[arg(long)]
    pub volume: PathBuf,
    /// Min-max normalize the volume first.
    #[arg(long)]
    pub normalize: bool,
    /// Feature container header to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Patch grid per slice as rows,cols.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [18, 18])]
    pub grid: Vec<usize>,
    /// Channels per token.
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    /// Encoder levels to emit; the last one feeds the visual tokens.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 6, 9, 12])]
    pub levels: Vec<LevelId>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Feature container header written by `encode`.
    #[arg(long)]
    pub features: PathBuf,
    /// Mask manifest used to pick one slice per region.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Level to pool; the last level by default.
    #[arg(long)]
    pub level: Option<LevelId>,
    /// Study id recorded in the output; the manifest's id by default.
    #[arg(long)]
    pub study_id: Option<String>,
    /// Token sequence header to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegtokArgs {
    /// Feature container header written by `encode`.
    #[arg(long)]
    pub features: PathBuf,
    /// Mask manifest on the same grid as the features.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Projection weights; generated from --seed when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Where to save generated weights.
    #[arg(long)]
    pub save_weights: Option<PathBuf>,
    /// Spatial-token grid as D,H,W.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [8, 16, 16])]
    pub spatial_grid: Vec<usize>,
    /// Study id recorded in the output; the manifest's id by default.
    #[arg(long)]
    pub study_id: Option<String>,
    /// Segmentation token JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "6")]
    Six,
    #[value(name = "26")]
    TwentySix,
}

#[derive(Debug, Args)]
pub struct AttrsArgs {
    /// Mask manifest at original resolution.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report diameters as voxel extents instead of millimetres.
    #[arg(long)]
    pub voxel_units: bool,
    /// Voxel neighbourhood for lesion components.
    #[arg(long, value_enum, default_value = "26")]
    pub connectivity: ConnectivityArg,
    /// Also print the rendered attribute text to stderr.
    #[arg(long)]
    pub text: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Token sequence header written by `pool`.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Segmentation token JSON written by `segtok`.
    #[arg(long)]
    pub segtok: PathBuf,
    /// Attributes JSON as written by `attrs`.
    #[arg(long)]
    pub attrs: PathBuf,
    /// Target region 1..6; all six when omitted.
    #[arg(long)]
    pub region: Option<u8>,
    /// Prompt options (order, budget, preamble) as JSON or TOML.
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Directory receiving prompt_region_{id}.jsonl files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Report text file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Labeled sentences, JSON lines {"sentence", "region"}.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Keyword lexicon {region_id: [keywords]}; the bundled one by default.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Pipeline config whose `lexicon` applies when --lexicon is absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Structured report JSON to write; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Structured report JSON as written by `split-report` or `generate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Emit "<header> Unremarkable." for empty regions.
    #[arg(long)]
    pub complete: bool,
    /// Pipeline config whose `completeness` applies as well.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output text file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SmoothingArg {
    Epsilon,
    AddOne,
    None,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON lines {"candidate", "reference"}.
    #[arg(long)]
    pub pairs: PathBuf,
    /// BLEU smoothing for zero n-gram matches.
    #[arg(long, value_enum, default_value = "epsilon")]
    pub smoothing: SmoothingArg,
    /// Metric report JSON to write; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline config, JSON or TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory holding prompt_region_{1..6}.jsonl.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Endpoint config (JSON or TOML). The API key comes only from the
    /// CTREPORT_LLM_API_KEY environment variable.
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Override the endpoint URL.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Emit "<header> Unremarkable." for regions that produced no text.
    #[arg(long)]
    pub complete: bool,
    /// Pipeline config whose `completeness` applies as well.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the prompt directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Directory receiving the raw containers and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// D,H,W; 32,96,96 by default.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub dims: Option<Vec<usize>>,
    /// Voxel spacing in mm as z,y,x; 8,3,3 by default.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub spacing: Option<Vec<f64>>,
    /// Study id; "phantom" by default.
    #[arg(long)]
    pub id: Option<String>,
}

fn dims3(v: &[usize]) -> Dims {
    Dims::new(v[0], v[1], v[2])
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(io_util::write_atomic(p, text.as_bytes())?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    // Output types contain only strings, numbers, maps and sequences.
    let mut s = serde_json::to_string_pretty(v).expect("output types serialize");
    s.push('\n');
    s
}

fn region_arg(id: u8) -> Result<Region, CliError> {
    Region::from_id(id).ok_or_else(|| CliError::Config(format!("region must be 1..6, got {id}")))
}

fn study_id_for(manifest: &Path, given: Option<String>) -> Result<String, CliError> {
    match given {
        Some(id) => Ok(id),
        None => Ok(load_study(manifest)?.id),
    }
}

impl Cli {
    pub fn run(self) -> Result<(), CliError> {
        let seed = self.seed;
        match self.command {
            Command::Ingest(a) => {
                let study = load_study(&a.manifest)?;
                let pre = study.preprocess(dims3(&a.target))?;
                std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
                let manifest = pre.save(&a.out)?;
                eprintln!("wrote {}", manifest.display());
            }
            Command::Encode(a) => {
                let mut vol = load_volume(&a.volume)?;
                if a.normalize {
                    vol = normalize_minmax(&vol);
                }
                let cfg = StubEncoderConfig {
                    grid: Grid::new(a.grid[0], a.grid[1]),
                    channels: a.channels,
                    level_ids: a.levels,
                };
                save_features(&stub_encode_volume(&vol, &cfg)?, &a.out)?;
            }
            Command::Pool(a) => {
                let stack = load_precomputed_features(&a.features)?;
                let masks = load_mask_set(&a.manifest)?;
                let selection = select_region_slices(&masks);
                let level = a.level.unwrap_or(stack.final_level().level_id);
                let id = study_id_for(&a.manifest, a.study_id)?;
                let seq = r2_pool(&stack, &selection, level)?.with_study_id(id);
                save_token_sequence(&seq, &a.out)?;
                eprintln!(
                    "{} visual tokens ({} global + {} region)",
                    seq.len(),
                    seq.global.rows(),
                    seq.region.rows()
                );
            }
            Command::Segtok(a) => {
                let stack = load_precomputed_features(&a.features)?;
                let masks = load_mask_set(&a.manifest)?;
                let weights = match &a.weights {
                    Some(p) => ProjectionWeights::load(p)?,
                    None => ProjectionWeights::seeded(
                        stack.level_ids(),
                        stack.channels(),
                        dims3(&a.spatial_grid),
                        seed.unwrap_or(0),
                    )?,
                };
                if let Some(p) = &a.save_weights {
                    weights.save(p)?;
                }
                let selection = select_region_slices(&masks);
                let mut set = segmentation_tokens(&masks, &stack, &selection, &weights)?;
                set.study_id = study_id_for(&a.manifest, a.study_id)?;
                set.save(&a.out)?;
            }
            Command::Attrs(a) => {
                let masks = load_mask_set(&a.manifest)?;
                let opts = AttrOptions {
                    connectivity: match a.connectivity {
                        ConnectivityArg::Six => Connectivity::Six,
                        ConnectivityArg::TwentySix => Connectivity::TwentySix,
                    },
                    unit: if a.voxel_units {
                        DiameterUnit::Voxels
                    } else {
                        DiameterUnit::Millimeters
                    },
                };
                let attrs = extract_attributes(&masks, masks.spacing(), opts);
                if a.text {
                    eprintln!("{}", render_attribute_report(&attrs));
                }
                emit(a.out.as_deref(), &to_json(&attrs))?;
            }
            Command::Prompt(a) => {
                let tokens = load_token_sequence(&a.tokens)?;
                let segtoks = SegmentationTokenSet::load(&a.segtok)?;
                let attrs: ctreport_core::attrx::PatientAttributes = io_util::read_json(&a.attrs)?;
                let attr_text = render_attribute_report(&attrs);
                let opts: PromptOptions = match &a.options {
                    Some(p) => read_document(p)?,
                    None => PromptOptions::default(),
                };
                let bundles = match a.region {
                    Some(id) => vec![build_prompt(&tokens, &segtoks, &attr_text, region_arg(id)?, &opts)?],
                    None => build_all_prompts(&tokens, &segtoks, &attr_text, &opts)?,
                };
                std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
                for b in &bundles {
                    b.save(&a.out_dir.join(prompt_file_name(b.region_id)))?;
                }
            }
            Command::SplitReport(a) => {
                let configured = match &a.config {
                    Some(c) => PipelineConfig::load(c)?.load_lexicon()?,
                    None => None,
                };
                let lexicon = match &a.lexicon {
                    Some(p) => Lexicon::load(p)?,
                    None => configured.unwrap_or_else(|| LEXICON_V1.clone()),
                };
                let labeled = a.labels.as_deref().map(read_labeled_jsonl).transpose()?;
                let report = match (&a.report, labeled) {
                    (Some(r), labeled) => {
                        let text = io_util::read_to_string(r)?;
                        let labels: Option<Vec<Region>> = labeled.map(|l| l.iter().map(|s| s.region).collect());
                        split_report(&text, labels.as_deref(), &lexicon)?
                    }
                    (None, Some(labeled)) => group_labeled(&labeled),
                    (None, None) => return Err(CliError::Config("give --report, --labels or both".into())),
                };
                emit(a.out.as_deref(), &to_json(&report))?;
            }
            Command::MergeReport(a) => {
                let report: StructuredReport = io_util::read_json(&a.input)?;
                let completeness = a.complete || configured_completeness(a.config.as_deref())?;
                let text = merge_reports(&report, MergeOptions { completeness });
                emit(a.out.as_deref(), &format!("{text}\n"))?;
            }
            Command::Eval(a) => {
                let pairs = read_pairs_jsonl(&a.pairs)?;
                let smoothing = match a.smoothing {
                    SmoothingArg::Epsilon => BleuSmoothing::Epsilon,
                    SmoothingArg::AddOne => BleuSmoothing::AddOne,
                    SmoothingArg::None => BleuSmoothing::None,
                };
                emit(a.out.as_deref(), &to_json(&evaluate(&pairs, smoothing)))?;
            }
            Command::Pipeline(a) => {
                let mut cfg = PipelineConfig::load(&a.config)?;
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(o) = a.out {
                    cfg.output_dir = o;
                }
                for (summary, dir) in run_pipeline(&cfg)? {
                    eprintln!(
                        "{}: {} vision tokens, {} segmentation tokens, {} prompts -> {}",
                        summary.study_id,
                        summary.vision_tokens,
                        summary.seg_tokens,
                        summary.prompts,
                        dir.display()
                    );
                }
            }
            Command::Generate(a) => generate(a)?,
            Command::MakePhantom(a) => {
                let mut cfg = PhantomConfig::default();
                if let Some(d) = &a.dims {
                    cfg.dims = dims3(d);
                }
                if let Some(s) = &a.spacing {
                    cfg.spacing = Spacing([s[0], s[1], s[2]]);
                }
                if let Some(id) = a.id {
                    cfg.id = id;
                }
                cfg.seed = seed.unwrap_or(0);
                let study = make_phantom(&cfg)?;
                std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
                let manifest = study.save(&a.out)?;
                eprintln!("wrote {}", manifest.display());
            }
        }
        Ok(())
    }
}

fn configured_completeness(config: Option<&Path>) -> Result<bool, CliError> {
    Ok(match config {
        Some(c) => PipelineConfig::load(c)?.merge_options().completeness,
        None => false,
    })
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut cfg: EndpointConfig = match &a.endpoint {
        Some(p) => read_document(p)?,
        None => EndpointConfig::default(),
    };
    if let Some(u) = a.base_url {
        cfg.base_url = u;
    }
    let client = LlmClient::new(cfg.with_env_key())?;
    let bundles = Region::ALL
        .iter()
        .map(|&r| PromptBundle::load(&a.prompts.join(prompt_file_name(r))))
        .collect::<Result<Vec<_>, _>>()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("<tokio runtime>", e))?;
    let replies = runtime.block_on(client.generate_all(&bundles));
    let mut report = StructuredReport::empty(ReportSource::Merged);
    for (b, reply) in bundles.iter().zip(replies) {
        let text = reply?;
        report.push(b.region_id, text.trim());
    }
    let out = a.out.unwrap_or(a.prompts);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    io_util::write_json(&out.join("report.json"), &report)?;
    let completeness = a.complete || configured_completeness(a.config.as_deref())?;
    let merged = merge_reports(&report, MergeOptions { completeness });
    io_util::write_atomic(&out.join("report.txt"), format!("{merged}\n").as_bytes())?;
    println!("{merged}");
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("CTREPORT_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    if cli.jobs > 0 {
        // Only fails if a pool was already installed, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
