//! `patchforge` command-line tool.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when `--strict` is given and
//! the guideline check reports a warning.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use patchforge::metrics::parse_metric_list;
use patchforge::MetricKind;
use tracing_subscriber::EnvFilter;

/// Comma-separated metric names, parsed as one value.
#[derive(Debug, Clone)]
pub struct MetricList(pub Vec<MetricKind>);

fn metric_list(s: &str) -> patchforge::Result<MetricList> {
    parse_metric_list(s).map(MetricList)
}

#[derive(Debug, Parser)]
#[command(
    name = "patchforge",
    version,
    about = "Training-patch extraction, scoring and mining"
)]
pub struct Cli {
    /// Worker threads for intra-stage parallelism (default: logical CPUs).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Global seed for noise synthesis and random selection.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop grid patches from a directory of HR images.
    Extract(ExtractArgs),
    /// Synthesize degraded inputs for every record.
    Degrade(DegradeArgs),
    /// Attach metric scores to every record.
    Score(ScoreArgs),
    /// Rank records by a metric and mark the kept ones.
    Select(SelectArgs),
    /// Expand selected records by dihedral transforms.
    Augment(AugmentArgs),
    /// Check a manifest against the dataset-construction guideline.
    Check(CheckArgs),
    /// Histograms, correlations, summaries and CSV export.
    Report(ReportArgs),
    /// Run a declarative multi-stage pipeline.
    Run(RunArgs),
    /// Print tool and schema versions.
    Version(VersionArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long, default_value_t = 96)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 120)]
    pub stride: usize,
    /// Positions must be multiples of this (the SR scale).
    #[arg(long, default_value_t = 1)]
    pub scale_align: usize,
    /// Add flush-to-edge positions when the grid leaves a margin.
    #[arg(long)]
    pub cover_edges: bool,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each HR patch as `<patch_id>.png` here.
    #[arg(long)]
    pub save_patches: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `bicubic`, `awgn`, or a chain such as `bicubic+awgn`.
    #[arg(long)]
    pub model: String,
    /// Downsampling factor for `bicubic` (2, 3 or 4).
    #[arg(long)]
    pub scale: Option<usize>,
    /// Noise standard deviation for `awgn`, on the [0, 255] scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Clamp the degraded result to [0, 255].
    #[arg(long)]
    pub clip: bool,
    /// Write float PFT1 tensors instead of 8-bit PNGs.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("loss_source").args(["restored_dir", "loss_csv"])))]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated list from grad, std, freq, loss.
    #[arg(long, value_parser = metric_list, default_value = "grad")]
    pub metrics: MetricList,
    /// Directory of restored outputs named `<patch_id>.png`.
    #[arg(long)]
    pub restored_dir: Option<PathBuf>,
    /// CSV with header `patch_id,loss`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["keep_fraction", "top_k", "threshold", "random"])))]
pub struct SelectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "grad")]
    pub metric: MetricKind,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Keep N records chosen at random (uses `--seed`).
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    /// Drop unselected records instead of keeping them with `selected = false`.
    #[arg(long)]
    pub prune: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("set").required(true).args(["dihedral8", "transforms"])))]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// All eight flips and rotations.
    #[arg(long)]
    pub dihedral8: bool,
    /// Comma-separated transform ids 0-7.
    #[arg(long)]
    pub transforms: Option<String>,
    /// Confirm that the restoration task is invariant to flips and rotations.
    #[arg(long)]
    pub assert_invariant: bool,
    /// Write each transformed patch as a PNG into this directory.
    #[arg(long)]
    pub materialize: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Exit with status 2 when any check warns.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Metric to histogram.
    #[arg(long)]
    pub histogram: Option<MetricKind>,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Bin on a log10 scale.
    #[arg(long)]
    pub log: bool,
    /// Value transform applied before binning: `identity` or `sqrt`.
    #[arg(long)]
    pub transform: Option<String>,
    /// Histogram range as `lo,hi` (default: data range).
    #[arg(long)]
    pub range: Option<String>,
    /// Comma-separated metrics to correlate pairwise.
    #[arg(long, value_parser = metric_list)]
    pub correlate: Option<MetricList>,
    /// Metric to summarize (count, mean, std, quartiles).
    #[arg(long)]
    pub summary: Option<MetricKind>,
    /// CSV output; further tables go to `<stem>_correlation.csv` and
    /// `<stem>_summary.csv` beside it. Printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG bar chart of the histogram.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Export manifest records as CSV.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Columns for `--export` (default: all).
    #[arg(long, requires = "export")]
    pub columns: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "input_dir"])))]
pub struct RunArgs {
    /// TOML pipeline config.
    pub config: Option<PathBuf>,
    /// Run the default pipeline over this directory instead of a config.
    #[arg(long, requires = "out_root")]
    pub input_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_root: Option<PathBuf>,
    /// Exit with status 2 when the final guideline check warns.
    #[arg(long)]
    pub strict: bool,
    /// Overwrite an output root that already holds stage manifests.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct VersionArgs {
    #[arg(long)]
    pub json: bool,
}

fn init_logging(cli: &Cli) {
    let default = if cli.quiet { "error" } else { "info" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false);
    if cli.json_logs {
        builder.json().init();
    } else {
        builder.without_time().init();
    }
}

/// The error chain joined by `: `, skipping causes the outer message already quotes.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(1)
        }
    }
}
