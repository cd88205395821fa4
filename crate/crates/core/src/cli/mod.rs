//! `docret` command line.

mod commands;
mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::providers::{ProviderKind, DEFAULT_MAX_IN_FLIGHT};

pub use commands::run;
pub use serve::{router, AppState, SearchHit, SearchRequest, SearchResponse};

#[derive(Debug, Parser)]
#[command(name = "docret", version, about = "Document retrieval workbench")]
pub struct Cli {
    /// Seed for every random choice in the command.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Log filter, e.g. `info` or `docret=debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a corpus (or load an embedding file) and persist an index.
    Index(IndexArgs),
    /// Retrieve for every dataset query and score the run.
    Eval(EvalArgs),
    /// Mine hard negatives.
    Mine(MineArgs),
    /// Interpolate two checkpoint containers.
    Merge(MergeArgs),
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Compare analytic loss gradients against finite differences.
    LossCheck(LossCheckArgs),
    /// Serve `/healthz` and `/search` over a persisted index.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderChoice {
    Synthetic,
    Precomputed,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderChoice>,
    /// Output dimension of the synthetic provider.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Precomputed embedding file (`id<TAB>dense|mv<TAB>values` lines).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub remote_url: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
}

impl ProviderArgs {
    /// The provider selected on the command line, if any.
    pub fn kind(&self, seed: u64) -> Result<Option<ProviderKind>> {
        let kind = match self.provider {
            None => return Ok(None),
            Some(ProviderChoice::Synthetic) => ProviderKind::Synthetic { seed, dim: self.dim },
            Some(ProviderChoice::Precomputed) => {
                let path = self
                    .embeddings
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("--provider precomputed needs --embeddings".into()))?;
                let path = std::fs::canonicalize(&path).map_err(|e| Error::io(&path, e))?;
                ProviderKind::PrecomputedFile { path }
            }
            Some(ProviderChoice::Remote) => ProviderKind::Remote {
                base_url: self
                    .remote_url
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("--provider remote needs --remote-url".into()))?,
                timeout_ms: self.timeout_ms,
                max_in_flight: self.max_in_flight,
            },
        };
        kind.validate()?;
        Ok(Some(kind))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KindChoice {
    Dense,
    Multivector,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// BEIR dataset directory (reads `corpus.jsonl`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, value_enum, default_value = "dense")]
    pub kind: KindChoice,
    /// Token cap for multi-vector embeddings.
    #[arg(long, default_value_t = 32)]
    pub max_tokens: usize,
    /// Build an HNSW graph alongside the exact index.
    #[arg(long)]
    pub ann: bool,
    #[arg(long, default_value_t = 16)]
    pub hnsw_m: usize,
    #[arg(long, default_value_t = 200)]
    pub ef_construction: usize,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    /// Index directory (default `<output-dir>/index`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Index directory; not needed with `--run`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Score an existing run file instead of retrieving.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// dense-exact, dense-ann, multivector or multivector-norm.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[arg(long, default_value = "ndcg@5,ndcg@10,recall@5,recall@10,map@10,mrr@10")]
    pub metrics: String,
    /// Baseline `report.json` to compare against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub ef_search: Option<usize>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Strategy {
    /// Fused corpus-wide rankings.
    Corpus,
    /// Neighbouring pages of the positive.
    Page,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "corpus")]
    pub strategy: Strategy,
    /// Page text JSONL for BM25 (defaults to corpus text).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Dense index used as an embedding ranker.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// External ranking TSV; repeatable.
    #[arg(long = "ranking")]
    pub rankings: Vec<PathBuf>,
    /// Skip the built-in BM25 ranker.
    #[arg(long)]
    pub no_bm25: bool,
    /// Page table TSV for `--strategy page`.
    #[arg(long)]
    pub pages: Option<PathBuf>,
    #[arg(long, default_value_t = crate::mining::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = crate::mining::DEFAULT_POOL)]
    pub pool: usize,
    #[arg(long, default_value_t = crate::mining::DEFAULT_RRF_K)]
    pub rrf_k: f64,
    #[arg(long, default_value = "-3,-2,-1,1,2,3", allow_hyphen_values = true)]
    pub page_window: String,
    /// Depth of each built-in ranker before fusion.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value = "slerp")]
    pub method: String,
    /// Weight of A for linear; SLERP returns A at 0.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value = "interpolate")]
    pub magnitude: String,
    #[arg(long, default_value_t = crate::merge::DEFAULT_PARALLEL_THRESHOLD)]
    pub parallel_threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// 2D PCA per embedding file.
    Pca(PcaArgs),
    /// Query-token MaxSim grids over document tokens.
    Heatmap(HeatmapArgs),
    /// Bytes per document for indexes or hypothetical configurations.
    Storage(StorageArgs),
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Multi-vector embedding file holding both ids.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub doc: Option<String>,
    /// Embed with the synthetic provider instead.
    #[arg(long)]
    pub query_text: Option<String>,
    #[arg(long)]
    pub doc_text: Option<String>,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 256)]
    pub max_tokens: usize,
    /// `ROWSxCOLS`; inferred when omitted.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct StorageArgs {
    #[arg(long = "index")]
    pub indexes: Vec<PathBuf>,
    /// Comma-separated dense dimensions.
    #[arg(long)]
    pub dense_dims: Option<String>,
    /// Comma-separated `TOKENSxDIM` multi-vector shapes.
    #[arg(long)]
    pub multivector: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub docs: u64,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = crate::losses::DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub provider: ProviderArgs,
}
