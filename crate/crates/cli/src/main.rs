use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod failure;

use bookpair_core::eval::TextMatch;
use bookpair_core::{DistanceMetric, ReadingOrder};

#[derive(Parser)]
#[command(
    name = "bookpair",
    version,
    about = "Build image-text pair datasets from book page annotations"
)]
struct Cli {
    /// Output style on standard output.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Extract image-text pairs from a directory of page annotations.
    Extract(ExtractArgs),
    /// Generate a synthetic corpus with ground truth.
    Gen(GenArgs),
    /// Score a predicted manifest against a ground-truth manifest.
    EvalPairs(EvalPairsArgs),
    /// Recall@K for query/gallery embedding files.
    EvalRetrieval(EvalRetrievalArgs),
    /// Print the statistics block of a manifest.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Directory of page annotation JSON files.
    #[arg(long)]
    pub pages: PathBuf,
    /// Book metadata JSON document.
    #[arg(long)]
    pub metadata: PathBuf,
    /// Manifest output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (pipeline settings, either flat or under "pipeline").
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fail on any malformed page or missing metadata instead of skipping.
    #[arg(long)]
    pub strict: bool,
    /// Crop list output path [default: <out>.crops.jsonl].
    #[arg(long)]
    pub crops: Option<PathBuf>,
    /// Exclusion sidecar output path [default: <out>.exclusions.jsonl].
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    #[arg(long)]
    pub text_density_max_chars: Option<usize>,
    #[arg(long)]
    pub min_caption_chars: Option<usize>,
    #[arg(long)]
    pub join_delimiter: Option<String>,
    #[arg(long)]
    pub row_overlap_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub distance_metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub reading_order: Option<OrderArg>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MetricArg {
    EdgeToEdge,
    CenterToCenter,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::EdgeToEdge => DistanceMetric::EdgeToEdge,
            MetricArg::CenterToCenter => DistanceMetric::CenterToCenter,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OrderArg {
    HorizontalLtr,
    VerticalRtl,
}

impl From<OrderArg> for ReadingOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::HorizontalLtr => ReadingOrder::HorizontalLtr,
            OrderArg::VerticalRtl => ReadingOrder::VerticalRtl,
        }
    }
}

#[derive(Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (generator settings, either flat or under "generator").
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of pages to generate.
    #[arg(long)]
    pub n_pages: Option<usize>,
}

#[derive(Args)]
pub struct EvalPairsArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
    #[arg(long, value_enum, default_value_t = TextMatchArg::Normalized)]
    pub text_match: TextMatchArg,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TextMatchArg {
    Exact,
    Normalized,
}

impl From<TextMatchArg> for TextMatch {
    fn from(t: TextMatchArg) -> Self {
        match t {
            TextMatchArg::Exact => TextMatch::Exact,
            TextMatchArg::Normalized => TextMatch::Normalized,
        }
    }
}

#[derive(Args)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub ks: Vec<usize>,
    /// Evaluate on seeded subsamples of this many pairs.
    #[arg(long)]
    pub sample_n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of subsamples to average over (with --sample-n).
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Manifest to summarize.
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a, cli.format),
        Command::Gen(a) => commands::gen(a, cli.format),
        Command::EvalPairs(a) => commands::eval_pairs(a, cli.format),
        Command::EvalRetrieval(a) => commands::eval_retrieval(a, cli.format),
        Command::Stats(a) => commands::stats(a, cli.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
