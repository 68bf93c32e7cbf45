use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chatrank", version, about = "Retrieval-based chat response ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic desk corpus (pairs, training and held-out triples).
    GenCorpus(GenCorpusArgs),
    /// Build the TF-IDF index over a pairs file.
    BuildIndex(BuildIndexArgs),
    /// Train the twin-tower semantic model on a pairs file.
    TrainCdssm(TrainCdssmArgs),
    /// Train LambdaMART ensembles on conversation triples.
    TrainRanker(TrainRankerArgs),
    /// Evaluate ranking systems on held-out triples.
    Eval(EvalArgs),
    /// Interactive terminal chat.
    Chat(ChatArgs),
    /// Serve the HTTP API (and optionally static web UI files).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Blocklist file: one lowercase term per line, `#` comments.
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 3000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1500)]
    pub train: usize,
    #[arg(long, default_value_t = 600)]
    pub heldout: usize,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct TrainCdssmArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub vocab_max: Option<usize>,
    #[arg(long)]
    pub conv_window: Option<usize>,
    #[arg(long)]
    pub conv_dim: Option<usize>,
    #[arg(long)]
    pub sem_dim: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub neg_per_pos: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct TrainRankerArgs {
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub cdssm: PathBuf,
    /// Ensemble file, or a directory when `--system all`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature set: ir_status_cmm, semrel_cmm, semrel_cmm_ccf or all.
    #[arg(long, default_value = "semrel_cmm_ccf")]
    pub system: String,
    /// Negatives sampled per observed response.
    #[arg(long, default_value_t = chatrank_core::pipeline::NEGATIVES_PER_POSITIVE)]
    pub negatives: usize,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// Also write the labelled training features as TSV.
    #[arg(long)]
    pub features_tsv: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub heldout: PathBuf,
    /// Comma-separated system names, or `all`.
    #[arg(long, default_value = "all")]
    pub systems: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; printed to stdout either way.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub cdssm: PathBuf,
    /// Directory holding `<system>.mart` ensembles.
    #[arg(long)]
    pub ranker_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 9)]
    pub distractors: usize,
    /// Vote file (`{"id":..,"votes":[5 x 0/1]}` per line) to aggregate.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub cdssm: PathBuf,
    #[arg(long)]
    pub ranker: PathBuf,
    /// Candidates fetched per message.
    #[arg(long, default_value_t = chatrank_core::index::DEFAULT_K)]
    pub k: usize,
    /// Messages with at most this many tokens are expanded with the context.
    #[arg(long, default_value_t = chatrank_core::index::DEFAULT_SHORT_QUERY_LEN)]
    pub short_query_len: usize,
    /// Preceding turns used as context.
    #[arg(long, default_value_t = 1)]
    pub context_turns: usize,
    #[arg(long, default_value = chatrank_core::service::DEFAULT_FALLBACK)]
    pub fallback: String,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Print the ranked candidates after each reply.
    #[arg(long)]
    pub debug: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory with the built web UI, served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Seconds of inactivity before a session is dropped.
    #[arg(long, default_value_t = 3600)]
    pub session_ttl: u64,
}
