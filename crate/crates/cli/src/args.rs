use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lookahead_core::eval::Grouping;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "lookahead", version, about = "Graph reasoning benchmark generation, profiling and evaluation")]
pub struct Cli {
    /// Master seed; every artifact is a pure function of it and the inputs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Table format for metrics and histograms.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Cell,
    Model,
}

impl From<GroupArg> for Grouping {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Cell => Grouping::Cell,
            GroupArg::Model => Grouping::Model,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate symbolic examples for a lookahead x branch grid.
    Generate(GenerateArgs),
    /// Generate single-branch chain examples.
    Chain(ChainArgs),
    /// Turn symbolic datasets into proof-planning datasets.
    Translate(TranslateArgs),
    /// Lookahead, distance and branch distributions of edge-list graphs.
    Profile(ProfileArgs),
    /// Proof-length distributions of proof corpora.
    ProfileProofs(ProfileProofsArgs),
    /// Query endpoints on datasets, persisting every response.
    Evaluate(EvaluateArgs),
    /// Build proof-verification items by altering one line per proof.
    Perturb(PerturbArgs),
    /// Regrade stored responses against their datasets.
    Grade(GradeArgs),
    /// Aggregate graded responses into metrics tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Cells such as `L=2..8,B=2` or `L=2..32x2,B=1,2,4,8`; repeatable.
    #[arg(long)]
    pub grid: Vec<String>,
    #[arg(long)]
    pub per_cell: Option<usize>,
    /// Edge cap applied to every grid cell.
    #[arg(long)]
    pub max_edges: Option<usize>,
    /// Preferential attachment smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Chain depths generated alongside the grid.
    #[arg(long, value_delimiter = ',')]
    pub chain_depths: Vec<u32>,
    #[arg(long)]
    pub chain_extra_nodes: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, value_delimiter = ',')]
    pub depths: Vec<u32>,
    #[arg(long)]
    pub per_cell: Option<usize>,
    /// Dangling distractor nodes hung off each chain.
    #[arg(long)]
    pub extra_nodes: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Symbolic dataset files.
    #[arg(long = "input", short = 'i', required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Edge-list files, one edge per line.
    #[arg(long = "input", short = 'i', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Number of sampled sources per graph.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Stop each sweep after this many BFS layers.
    #[arg(long)]
    pub layer_cap: Option<u32>,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Node ids are arbitrary strings rather than integers.
    #[arg(long)]
    pub string_ids: bool,
    /// Record the inputs as undirected. Edges are still used as given.
    #[arg(long)]
    pub undirected: bool,
    /// Also emit the uniform mixture of all input profiles.
    #[arg(long)]
    pub merge_uniform: bool,
    #[arg(long, default_value = "merged")]
    pub merged_name: String,
}

#[derive(Debug, Args)]
pub struct ProfileProofsArgs {
    /// JSONL corpora of `{proof_id, lines}` records.
    #[arg(long = "input", short = 'i', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub merge_uniform: bool,
    #[arg(long, default_value = "merged")]
    pub merged_name: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Symbolic, proof-planning or verification datasets.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    /// Endpoint names from the config; defaults to the config's list.
    #[arg(long)]
    pub endpoint: Vec<String>,
    /// Built-in offline endpoints: gold, uniform[:seed], refuse, truncate:N, fail, flaky:N, echo:TEXT.
    #[arg(long)]
    pub mock: Vec<String>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Keep existing records and only query what is missing.
    #[arg(long)]
    pub resume: bool,
    /// Query at most this many new items per endpoint.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Stop once this many completion tokens were spent per endpoint.
    #[arg(long)]
    pub token_budget: Option<u64>,
    /// Keep only the first N items of each cell.
    #[arg(long)]
    pub per_cell_cap: Option<usize>,
    /// Overrides each endpoint's concurrency limit.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// `rule` or `model:<endpoint>`.
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// JSONL corpus of `{proof_id, lines}` records.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Proof-length buckets such as `1-5,6-20,21+`.
    #[arg(long, value_delimiter = ',')]
    pub buckets: Vec<String>,
    #[arg(long)]
    pub per_stratum: Option<usize>,
    /// Endpoint name from the config that rewrites lines.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Offline rewriter instead of a configured endpoint.
    #[arg(long)]
    pub mock: Option<String>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// Also emit each sampled proof unmodified.
    #[arg(long)]
    pub controls: bool,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    /// Record files written by `evaluate`.
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    /// Datasets holding the ground truth.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Graded record files.
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
}
