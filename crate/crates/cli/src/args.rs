// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "saelang",
    version,
    about = "Language-specific units in recorded LLM activations"
)]
pub struct Cli {
    /// Worker threads for shard-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file of flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode dense FFN-output shards into SAE-latent shards.
    Encode(EncodeArgs),
    /// Entropy-based unit selection.
    #[command(subcommand)]
    Lape(LapeCommand),
    /// Feature geometry and co-activation.
    #[command(subcommand)]
    Props(PropsCommand),
    /// Activation steering plans.
    #[command(subcommand)]
    Steer(SteerCommand),
    /// Language identification from selected units.
    #[command(subcommand)]
    Lid(LidCommand),
    /// Project directions onto the vocabulary.
    #[command(subcommand)]
    Lens(LensCommand),
    /// Synthetic corpora for testing.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// CSV summaries of selection results.
    #[command(subcommand)]
    Report(ReportCommand),
}

/// Corpus input: a manifest plus the SAEs needed to encode dense shards.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Corpus manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    /// SAE weights, one file per layer (repeatable).
    #[arg(long = "sae")]
    pub saes: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory for the latent shards and their manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    /// Token-fraction cut of the frequency filter (strictly greater).
    #[arg(long, default_value_t = 0.10)]
    pub hfl_token_frac: f64,
    /// Minimum percentage of examples a unit must be active in.
    #[arg(long, default_value_t = 98.0)]
    pub n_min: f64,
    /// Languages within this percentage of the maximum probability are assigned.
    #[arg(long, default_value_t = 50.0)]
    pub t_threshold: f64,
    /// Let the token and example filters pass in different languages.
    #[arg(long)]
    pub decouple_filters: bool,
}

impl FilterArgs {
    pub fn params(&self) -> saelang::LapeParams {
        saelang::LapeParams {
            hfl_token_frac: self.hfl_token_frac,
            n_min: self.n_min,
            t_threshold: self.t_threshold,
            same_language: !self.decouple_filters,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum LapeCommand {
    /// Language-specific and shared SAE features.
    Find(LapeFindArgs),
    /// Per-language feature overlap and Jaccard similarity.
    Shared(LapeSharedArgs),
    /// Percentile-thresholded neuron baseline.
    Neurons(LapeNeuronsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LapeFindArgs {
    /// Corpus manifest JSON (alternative to --tables).
    #[arg(long, conflicts_with = "tables", required_unless_present = "tables")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "sae")]
    pub saes: Vec<PathBuf>,
    /// Probability tables written by an earlier --tables-out.
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[command(flatten)]
    pub filters: FilterArgs,
    /// Also write the accumulated probability tables here.
    #[arg(long)]
    pub tables_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LapeSharedArgs {
    /// Profile JSON from `lape find`.
    #[arg(long)]
    pub profiles: PathBuf,
    /// Also write the Jaccard matrix as CSV.
    #[arg(long)]
    pub jaccard_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LapeNeuronsArgs {
    /// Manifest of FFN intermediate-activation shards.
    #[arg(long, conflicts_with = "tables", required_unless_present = "tables")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub tables: Option<PathBuf>,
    #[arg(long, default_value_t = 95.0)]
    pub percentile: f64,
    /// Fraction of all neurons kept, lowest entropy first.
    #[arg(long, default_value_t = 0.01)]
    pub bottom_frac: f64,
    #[arg(long)]
    pub tables_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PropsCommand {
    /// Most opposing decoder directions and their co-occurrence.
    Pairs(PropsPairsArgs),
    /// Activating-token IoU matrix.
    Iou(PropsMatrixArgs),
    /// Activation Pearson matrix.
    Pearson(PropsPearsonArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PropsPairsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Layer of the SAE to search.
    #[arg(long)]
    pub layer: u16,
    /// Target feature indices, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "profiles")]
    pub targets: Vec<usize>,
    /// Take the targets from the profiles of this layer instead.
    #[arg(long, conflicts_with = "targets")]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PropsMatrixArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Features as LAYER:INDEX, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PropsPearsonArgs {
    #[command(flatten)]
    pub matrix: PropsMatrixArgs,
    /// Only use tokens where at least one of the two features is active.
    #[arg(long)]
    pub union: bool,
}

#[derive(Debug, Subcommand)]
pub enum SteerCommand {
    /// Build a steering plan for one language.
    Plan(SteerPlanArgs),
    /// Apply a plan to a dense FFN-output shard.
    Apply(SteerApplyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SteerPlanArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Language code.
    #[arg(long)]
    pub language: String,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f32,
    /// Include shared units assigned to the language.
    #[arg(long)]
    pub include_shared: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SteerApplyArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Dense FFN-output shard to steer.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "sae")]
    pub saes: Vec<PathBuf>,
    /// FFN down-projection, one per layer (repeatable).
    #[arg(long = "ffn-down")]
    pub ffn_downs: Vec<PathBuf>,
    /// Replace every alpha of the plan.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LidCommand {
    /// Build a classifier from selected units.
    Build(LidBuildArgs),
    /// Score every example of a corpus.
    Score(LidScoreArgs),
    /// Score and evaluate against gold labels.
    Eval(LidEvalArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LidBuildArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Probability tables (for activation extremes).
    #[arg(
        long,
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub tables: Option<PathBuf>,
    /// Rebuild the tables from this corpus instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long = "sae")]
    pub saes: Vec<PathBuf>,
    #[arg(long, default_value_t = saelang::lid::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoringArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Min-max weighted occurrences instead of counts.
    #[arg(long)]
    pub weighted: bool,
    /// Divide scores by the size of each language's unit set.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LidScoreArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LidEvalArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// JSON object mapping example id to language code; defaults to the
    /// language each example's shard is listed under.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LensCommand {
    /// Vocabulary tokens a direction promotes most.
    TopTokens(LensArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LensArgs {
    #[arg(long)]
    pub unembedding: PathBuf,
    #[arg(long, required_unless_present = "ffn_down")]
    pub sae: Option<PathBuf>,
    #[arg(long, conflicts_with = "sae")]
    pub ffn_down: Option<PathBuf>,
    /// Unit as LAYER:INDEX.
    #[arg(long)]
    pub feature: String,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Write a synthetic corpus with planted units.
    Generate(SynthArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Generator settings JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Per-layer counts of selected units.
    Layers(ReportLayersArgs),
    /// Histogram of entropy values.
    LapeHist(ReportHistArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportLayersArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Count shared units by number of languages instead.
    #[arg(long)]
    pub shared: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportHistArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
