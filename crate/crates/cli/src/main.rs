//! `vdp`: key-frame filtering, scene tagging and manifest queries for driving sequences.

mod commands;
mod range;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vdp", version, about = "Key-frame filtering and scene tagging for driving sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter one sequence and write its manifest.
    Filter(FilterArgs),
    /// Retention percentages over threshold ranges, one CSV per metric.
    Sweep(SweepArgs),
    /// Re-tag scenes in existing manifests from a detection source.
    Tag(TagArgs),
    /// List frames from manifests matching scene, role and VOL criteria.
    Query(QueryArgs),
    /// Aggregate totals across manifests.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputMode {
    /// Frames of one video sequence, all the same size.
    Sequence,
    /// An unordered stack of stills; mixed sizes are cropped to a common centre.
    Stack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Consecutive,
    Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowArg {
    /// 7x7 uniform window.
    Uniform,
    /// 11x11 Gaussian window, sigma 1.5.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PayloadArg {
    /// JSON body `{"image_path": ...}`.
    Path,
    /// Raw image bytes.
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    /// SSIM comparison partner.
    #[arg(long, value_enum, default_value = "consecutive")]
    ssim_mode: ModeArg,
    #[arg(long, value_enum, default_value = "sequence")]
    mode: InputMode,
    #[arg(long, value_enum, default_value = "uniform")]
    ssim_window: WindowArg,
    /// Worker threads (default: logical core count).
    #[arg(long, env = "VDP_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
#[group(id = "detections_source", multiple = false)]
struct DetectorArgs {
    /// KITTI tracking label file, or a directory of `<sequence>.txt` files.
    #[arg(long, group = "detections_source")]
    labels: Option<PathBuf>,
    /// Detection JSON file, or a directory of `<frame_id>.json` files.
    #[arg(long, group = "detections_source")]
    detections: Option<PathBuf>,
    /// Detector service base URL; frames are POSTed to `<url>/detect`.
    #[arg(long, group = "detections_source")]
    detector_url: Option<String>,
    #[arg(long, value_enum, default_value = "path", requires = "detector_url")]
    detector_payload: PayloadArg,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 5.0, requires = "detector_url")]
    detector_timeout: f64,
    /// Detections scoring at or below this are dropped.
    #[arg(long, default_value_t = vdp_core::detection::DEFAULT_MIN_OBJECTNESS)]
    min_objectness: f64,
    /// YAML scene rules replacing the built-in ladder.
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Directory of PNG/JPEG frames.
    #[arg(long)]
    input: PathBuf,
    /// Manifest path, or a directory to receive `<sequence>.manifest.yaml`.
    #[arg(long, required_unless_present = "stdout")]
    out: Option<PathBuf>,
    /// Write the manifest to stdout; the summary goes to stderr.
    #[arg(long)]
    stdout: bool,
    /// Minimum variance of Laplacian to keep a frame.
    #[arg(long, default_value_t = vdp_core::filter::DEFAULT_VOL_THRESHOLD)]
    vol: f64,
    /// Frames more similar than this to their partner are dropped.
    #[arg(long, default_value_t = vdp_core::filter::DEFAULT_SSIM_THRESHOLD)]
    ssim: f64,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving `<sequence>.vol.csv` and `<sequence>.ssim.csv`.
    #[arg(long, required_unless_present = "stdout")]
    out: Option<PathBuf>,
    #[arg(long)]
    stdout: bool,
    /// VOL thresholds, e.g. `300:900:100` or `500,900`.
    #[arg(long)]
    vol: Option<String>,
    /// SSIM thresholds, e.g. `0.2:0.8:0.1`.
    #[arg(long)]
    ssim: Option<String>,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug, Args)]
struct TagArgs {
    /// A manifest file or a directory of manifests.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; manifests are rewritten in place when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "VDP_WORKERS")]
    workers: Option<usize>,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Directory of manifests.
    #[arg(long)]
    input: PathBuf,
    /// Scene to include; repeat for a union. All scenes when omitted.
    #[arg(long = "scene")]
    scenes: Vec<String>,
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    #[arg(long)]
    min_vol: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of manifests.
    #[arg(long)]
    input: PathBuf,
    /// Append per-sequence metrics in exposition format.
    #[arg(long)]
    metrics: bool,
    /// Write the exposition text here instead of appending it to stdout.
    #[arg(long, requires = "metrics")]
    out: Option<PathBuf>,
    /// Baseline mean objectness for drift checks.
    #[arg(long, requires = "baseline_seconds_per_frame")]
    baseline_objectness: Option<f64>,
    /// Baseline seconds per frame for drift checks.
    #[arg(long, requires = "baseline_objectness")]
    baseline_seconds_per_frame: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Filter(a) => commands::filter(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Tag(a) => commands::tag(a),
        Command::Query(a) => commands::query(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
