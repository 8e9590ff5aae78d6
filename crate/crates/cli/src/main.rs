mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tracing_subscriber::EnvFilter;

use crate::config::UsageError;

/// Linear-probe detection of AI-generated images on frozen backbone
/// embeddings.
#[derive(Debug, Parser)]
#[command(name = "probeforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run manifest (or JSON object) supplying defaults for this command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Human)]
    log_format: LogFormat,

    /// Log filter, e.g. `info` or `probeforge=debug`.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// Worker threads for data-parallel work (network fetches default to 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Human,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a linear probe on an embedding archive.
    Train(TrainArgs),
    /// Score a model on an archive and write a report.
    Eval(EvalArgs),
    /// Score one model on several archives side by side.
    Compare(CompareArgs),
    /// Write a JPEG- and/or blur-perturbed copy of a corpus.
    Perturb(PerturbArgs),
    /// Rank text-pool concepts against image embeddings.
    ProbeText(ProbeTextArgs),
    /// Aggregate per-frame logits into video scores.
    Video(VideoArgs),
    /// Count Common Crawl index records per snapshot.
    CcTrend(CcTrendArgs),
    /// Check manifests, archives, text pools, models and report CSVs.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Train split is taken from here; without it every archive row is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Test split is taken from here; without it every labeled row is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `generator` or `none`.
    #[arg(long)]
    pub group_by: Option<String>,
    /// `markdown`, `csv` or `json`.
    #[arg(long)]
    pub format: Option<String>,
    /// `long` (group, Real, Fake, Avg rows) or `wide` (one Avg column per
    /// group); wide is markdown only and the default for per-generator
    /// markdown.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `name=path` or `path`; repeat for each archive. The first is the
    /// reference for deltas.
    #[arg(long = "archive")]
    pub archives: Vec<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub group_by: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image root; defaults to the manifest's directory.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// JPEG quality (1-100), applied before any blur.
    #[arg(long)]
    pub jpeg: Option<u8>,
    /// Gaussian blur sigma in pixels.
    #[arg(long)]
    pub blur: Option<f64>,
    /// Perturbation chain as JSON; overrides --jpeg/--blur.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory (must be empty or absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeTextArgs {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Name shown in the report; defaults to the archive file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Per-frame archive with ids `video#NNNN`.
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// `contiguous_prefix` or `uniform`.
    #[arg(long)]
    pub sampling: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcTrendArgs {
    /// URL pattern as understood by the CDX server, e.g. `civitai.com/*`.
    #[arg(long)]
    pub pattern: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    /// `exact` (count result lines) or `pages` (block-count estimate).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub index_host: Option<String>,
    /// Minimum gap between request starts.
    #[arg(long)]
    pub min_delay_ms: Option<u64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Response cache; defaults to $PROBEFORGE_CACHE_DIR.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image root for --manifest; defaults to the manifest's directory.
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report CSV as written by `eval --format csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the JSON summary here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(cli: &Cli) {
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    match cli.log_format {
        LogFormat::Json => builder.json().init(),
        LogFormat::Human => builder.without_time().with_target(false).init(),
    }
}

/// 1 for bad data, 2 for bad invocation, 3 for I/O and network trouble.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<probeforge::Error>() {
            return match e {
                e if e.is_io() => 3,
                probeforge::Error::Parameter(_) => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<cctrend::CcError>() {
            return if e.is_io() { 3 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = commands::Context {
        config: cli.config.clone(),
        jobs: cli.jobs,
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Perturb(a) => commands::perturb(&ctx, a),
        Command::ProbeText(a) => commands::probe_text(&ctx, a),
        Command::Video(a) => commands::video(&ctx, a),
        Command::CcTrend(a) => commands::cc_trend(&ctx, a),
        Command::Validate(a) => commands::validate(&ctx, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match cli.log_format {
                LogFormat::Json => tracing::error!("{e:#}"),
                LogFormat::Human => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
