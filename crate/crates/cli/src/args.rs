//! Command-line surface. Flags override settings-file values, which
//! override built-in defaults.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sodaug", version, about = "Augment salient-object datasets")]
pub struct Cli {
    /// Settings file of `key = value` lines; `#` starts a comment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Raise log verbosity; repeat for more detail.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill each sample's salient region to produce a clean background.
    Inpaint(InpaintArgs),
    /// Compute color and texture descriptors for every sample.
    Extract(ExtractArgs),
    /// Pair each object with a background by feature distance.
    Match(MatchArgs),
    /// Composite objects onto their matched backgrounds.
    Synth(SynthArgs),
    /// Apply an online transform to every sample of a dataset.
    Augment(AugmentArgs),
    /// Summarize object position and size distributions.
    Stats(StatsArgs),
    /// Score one model's predicted maps against ground truth.
    Eval(EvalArgs),
    /// Rank models by their average metric rank.
    Rank(RankArgs),
    /// Run inpaint, extract, match, and synth in one pass.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    /// Input dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the filled backgrounds and their manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Backend name: `diffusion` or `external`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Shell template for the external backend, with `{image}`, `{mask}`,
    /// and `{out}` placeholders.
    #[arg(long)]
    pub cmd: Option<String>,
    /// Radius of the disc by which the hole is grown before filling.
    #[arg(long)]
    pub dilate: Option<u32>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output feature table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Describe only the masked object region (the default).
    #[arg(long, conflicts_with = "full")]
    pub masked: bool,
    /// Describe the whole image, ignoring masks.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Feature table of the objects being placed.
    #[arg(long)]
    pub object_features: PathBuf,
    /// Feature table of the candidate backgrounds.
    #[arg(long)]
    pub background_features: PathBuf,
    /// Neighbor selection rule: `mu-sigma` or `median`.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Score orientation: `distance` or `similarity`.
    #[arg(long)]
    pub score: Option<String>,
    /// Neighbors retained per object; omit to keep all candidates.
    #[arg(long)]
    pub k: Option<usize>,
    /// Let an object match the background derived from itself.
    #[arg(long)]
    pub no_exclude_self: bool,
    /// Output match table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Manifest of the object samples.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Manifest of the inpainted backgrounds.
    #[arg(long)]
    pub backgrounds: PathBuf,
    /// Match table produced by `match`.
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score orientation used when picking the landing patch.
    #[arg(long)]
    pub score: Option<String>,
    /// Directory for the synthesized dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Transform to apply: `hflip` or `gridmask`.
    pub name: String,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the transformed dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the report tables and figure.
    #[arg(long)]
    pub out: PathBuf,
    /// Density grid resolution per axis.
    #[arg(long)]
    pub grid: Option<u32>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted maps named `<id>.png`.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Ground-truth dataset manifest.
    #[arg(long)]
    pub gt_manifest: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Binarization threshold for the fixed-threshold metrics.
    #[arg(long = "fixed-th")]
    pub fixed_th: Option<u8>,
    /// Row label in the metrics table; defaults to the prediction
    /// directory's name.
    #[arg(long)]
    pub model_id: Option<String>,
    /// Output metrics table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the full precision-recall sweep.
    #[arg(long)]
    pub sweep_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Glob matching per-model metrics tables.
    #[arg(long)]
    pub metrics_glob: String,
    /// Threshold the metrics tables were computed at; recorded in the
    /// log for provenance only.
    #[arg(long = "fixed-th")]
    pub fixed_th: Option<u8>,
    /// Output ranking table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Input dataset manifest; may also come from the settings file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Root directory for all stage artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub cmd: Option<String>,
    #[arg(long)]
    pub dilate: Option<u32>,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub no_exclude_self: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}
