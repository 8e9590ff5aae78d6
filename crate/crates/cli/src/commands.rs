use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context as _, Result};
use serde_json::{json, Value};
use tracing::{info, warn};

use cctrend::{
    render_trend_csv, trend, CdxClient, ClientConfig, CountMode, RetryPolicy, RowStatus, SnapshotId,
};
use probeforge::eval::{
    compare_archives, evaluate, parse_report_csv, render_comparison, render_report,
    render_wide_markdown, GroupBy, ReportFormat,
};
use probeforge::preprocess::{
    emit_perturbed_corpus, PerturbationSpec, DERIVED_MANIFEST, SPEC_FILE,
};
use probeforge::probe::{train as fit, ProbeModel, TrainConfig};
use probeforge::store::{
    read_archive, select_rows, validate_manifest_file, DatasetManifest, EmbeddingArchive, Split,
};
use probeforge::video::{render_video_csv, score_videos, Sampling, VideoConfig};
use probeforge::zeroshot::{aggregate_alignment, render_alignment, TextPool};

use crate::config::{load_config, merge, required, sidecar, usage, RunManifest};
use crate::{
    CcTrendArgs, CompareArgs, EvalArgs, PerturbArgs, ProbeTextArgs, TrainArgs, ValidateArgs,
    VideoArgs,
};

pub const CACHE_ENV: &str = "PROBEFORGE_CACHE_DIR";

pub struct Context {
    pub config: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Context {
    fn resolve<T>(&self, command: &str, flags: &T) -> Result<T>
    where
        T: serde::Serialize + serde::de::DeserializeOwned,
    {
        let file = self
            .config
            .as_deref()
            .map(|p| load_config(p, command))
            .transpose()?;
        merge(flags, file)
    }
}

fn parse<T: std::str::FromStr<Err = probeforge::Error>>(v: &str) -> Result<T> {
    Ok(v.parse()?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: Option<&Path>) -> Result<Option<DatasetManifest>> {
    Ok(path.map(DatasetManifest::read).transpose()?)
}

pub fn train(ctx: &Context, flags: &TrainArgs) -> Result<u8> {
    let mut a = ctx.resolve("train", flags)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: *a.lr.get_or_insert(defaults.learning_rate),
        batch_size: *a.batch_size.get_or_insert(defaults.batch_size),
        epochs: *a.epochs.get_or_insert(defaults.epochs),
        weight_decay: *a.weight_decay.get_or_insert(defaults.weight_decay),
        seed: *a.seed.get_or_insert(defaults.seed),
        ..defaults
    };
    let archive_path = required(a.archive.clone(), "archive")?;
    let out = required(a.out.clone(), "out")?;

    let archive = read_archive(&archive_path)?;
    let manifest = load_manifest(a.manifest.as_deref())?;
    info!(
        backbone = archive.backbone_id(),
        rows = archive.len(),
        "training linear probe"
    );
    let (model, log) = fit(&archive, manifest.as_ref(), &cfg)?;
    for (epoch, loss) in log.epoch_losses.iter().enumerate() {
        info!(epoch = epoch + 1, loss, "epoch finished");
    }
    info!(
        train_accuracy = log.train_accuracy,
        steps = log.steps,
        "done"
    );
    model.save(&out)?;

    let mut run = RunManifest::new("train", &a);
    run.input(&archive_path)?;
    if let Some(m) = &a.manifest {
        run.input(m)?;
    }
    run.output(&out)?;
    run.details = json!({ "train_log": log, "train_log_sha256": log.digest() });
    run.write(&sidecar(&out))?;
    Ok(0)
}

pub fn eval(ctx: &Context, flags: &EvalArgs) -> Result<u8> {
    let mut a = ctx.resolve("eval", flags)?;
    let group_by: GroupBy = parse(a.group_by.get_or_insert("generator".into()))?;
    let format: ReportFormat = parse(a.format.get_or_insert("markdown".into()))?;
    let default_layout = if format == ReportFormat::Markdown && group_by == GroupBy::Generator {
        "wide"
    } else {
        "long"
    };
    let layout = a.layout.get_or_insert(default_layout.into()).clone();
    let wide = match layout.as_str() {
        "long" => false,
        "wide" if format == ReportFormat::Markdown => true,
        "wide" => return Err(usage("--layout wide needs --format markdown")),
        other => return Err(usage(format!("unknown layout `{other}` (long|wide)"))),
    };
    let model_path = required(a.model.clone(), "model")?;
    let archive_path = required(a.archive.clone(), "archive")?;
    let out = required(a.out.clone(), "out")?;

    let model = ProbeModel::load(&model_path)?;
    let archive = read_archive(&archive_path)?;
    let manifest = load_manifest(a.manifest.as_deref())?;
    let report = evaluate(&model, &archive, manifest.as_ref(), group_by)?;
    if let Some(avg) = report.overall.avg {
        info!(dataset = %report.dataset, avg, "evaluated");
    }
    let text = if wide {
        render_wide_markdown(std::slice::from_ref(&report))
    } else {
        render_report(&report, format)
    };
    write_text(&out, &text)?;

    let mut run = RunManifest::new("eval", &a);
    run.input(&model_path)?.input(&archive_path)?;
    if let Some(m) = &a.manifest {
        run.input(m)?;
    }
    run.output(&out)?;
    run.details = json!({ "report": report });
    run.write(&sidecar(&out))?;
    Ok(0)
}

fn archive_arg(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

pub fn compare(ctx: &Context, flags: &CompareArgs) -> Result<u8> {
    let mut a = ctx.resolve("compare", flags)?;
    let group_by: GroupBy = parse(a.group_by.get_or_insert("generator".into()))?;
    let format: ReportFormat = parse(a.format.get_or_insert("markdown".into()))?;
    let model_path = required(a.model.clone(), "model")?;
    let out = required(a.out.clone(), "out")?;
    if a.archives.is_empty() {
        return Err(usage("missing required option --archive"));
    }

    let model = ProbeModel::load(&model_path)?;
    let manifest = load_manifest(a.manifest.as_deref())?;
    let named: Vec<(String, PathBuf)> = a.archives.iter().map(|s| archive_arg(s)).collect();
    let loaded: Vec<(String, EmbeddingArchive)> = named
        .iter()
        .map(|(n, p)| Ok((n.clone(), read_archive(p)?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(String, &EmbeddingArchive)> =
        loaded.iter().map(|(n, a)| (n.clone(), a)).collect();
    let cmp = compare_archives(&model, &refs, manifest.as_ref(), group_by)?;
    write_text(&out, &render_comparison(&cmp, format))?;

    let mut run = RunManifest::new("compare", &a);
    run.input(&model_path)?;
    for (_, p) in &named {
        run.input(p)?;
    }
    run.output(&out)?;
    run.write(&sidecar(&out))?;
    Ok(0)
}

pub fn perturb(ctx: &Context, flags: &PerturbArgs) -> Result<u8> {
    let a = ctx.resolve("perturb", flags)?;
    let manifest_path = required(a.manifest.clone(), "manifest")?;
    let out = required(a.out.clone(), "out")?;
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<PerturbationSpec>(&text)
                .map_err(|e| usage(format!("perturbation spec {}: {e}", p.display())))?
        }
        None => {
            let mut steps = Vec::new();
            if let Some(q) = a.jpeg {
                steps.extend(PerturbationSpec::jpeg(q).steps);
            }
            if let Some(s) = a.blur {
                steps.extend(PerturbationSpec::blur(s).steps);
            }
            if steps.is_empty() {
                return Err(usage("give --jpeg, --blur or --spec"));
            }
            PerturbationSpec { steps }
        }
    };
    if out.exists()
        && fs::read_dir(&out)
            .map(|mut d| d.next().is_some())
            .unwrap_or(true)
    {
        return Err(usage(format!(
            "output directory {} is not empty",
            out.display()
        )));
    }
    let manifest = DatasetManifest::read(&manifest_path)?;
    let root = a.root.clone().unwrap_or_else(|| manifest.root.clone());
    info!(spec = %spec.tag(), images = manifest.entries.len(), "perturbing corpus");
    let derived = emit_perturbed_corpus(&manifest, &root, &spec, &out)?;

    let mut run = RunManifest::new("perturb", &a);
    run.input(&manifest_path)?;
    run.output(&out.join(DERIVED_MANIFEST))?
        .output(&out.join(SPEC_FILE))?;
    run.details = json!({
        "spec": spec,
        "images": derived.entries.len(),
        "tree_sha256": crate::config::digest_tree(&out)?,
    });
    run.write(&out.join("run.json"))?;
    Ok(0)
}

pub fn probe_text(ctx: &Context, flags: &ProbeTextArgs) -> Result<u8> {
    let mut a = ctx.resolve("probe-text", flags)?;
    let k = *a.k.get_or_insert(2);
    let format: ReportFormat = parse(a.format.get_or_insert("markdown".into()))?;
    let archive_path = required(a.archive.clone(), "archive")?;
    let pool_path = required(a.pool.clone(), "pool")?;
    let out = required(a.out.clone(), "out")?;
    let dataset = a
        .dataset
        .get_or_insert_with(|| {
            archive_path
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        })
        .clone();

    let archive = read_archive(&archive_path)?;
    let pool = TextPool::read(&pool_path)?;
    if pool.backbone_id() != archive.backbone_id() {
        warn!(
            pool = pool.backbone_id(),
            archive = archive.backbone_id(),
            "pool and archive come from different backbones"
        );
    }
    let result = aggregate_alignment(dataset, &archive, &pool, k)?;
    write_text(&out, &render_alignment(&result, format))?;

    let mut run = RunManifest::new("probe-text", &a);
    run.input(&archive_path)?.input(&pool_path)?;
    run.output(&out)?;
    run.write(&sidecar(&out))?;
    Ok(0)
}

pub fn video(ctx: &Context, flags: &VideoArgs) -> Result<u8> {
    let mut a = ctx.resolve("video", flags)?;
    let cfg = VideoConfig {
        max_frames: *a
            .max_frames
            .get_or_insert(VideoConfig::default().max_frames),
        sampling: parse::<Sampling>(a.sampling.get_or_insert("contiguous_prefix".into()))?,
    };
    let model_path = required(a.model.clone(), "model")?;
    let archive_path = required(a.archive.clone(), "archive")?;
    let out = required(a.out.clone(), "out")?;

    let model = ProbeModel::load(&model_path)?;
    let archive = read_archive(&archive_path)?;
    let results = score_videos(&model, &archive, &cfg)?;
    info!(videos = results.len(), "scored videos");
    write_text(&out, &render_video_csv(&results))?;

    let mut run = RunManifest::new("video", &a);
    run.input(&model_path)?.input(&archive_path)?;
    run.output(&out)?;
    run.write(&sidecar(&out))?;
    Ok(0)
}

pub fn cc_trend(ctx: &Context, flags: &CcTrendArgs) -> Result<u8> {
    let mut a = ctx.resolve("cc-trend", flags)?;
    let pattern = required(a.pattern.clone(), "pattern")?;
    let from: SnapshotId = required(a.from.clone(), "from")?
        .parse()
        .map_err(|e| usage(format!("--from: {e}")))?;
    let to: SnapshotId = required(a.to.clone(), "to")?
        .parse()
        .map_err(|e| usage(format!("--to: {e}")))?;
    let mode: CountMode = a
        .mode
        .get_or_insert("exact".into())
        .parse()
        .map_err(|e| usage(format!("--mode: {e}")))?;
    let out = required(a.out.clone(), "out")?;
    let defaults = ClientConfig::default();
    let cache_dir = if a.no_cache {
        None
    } else {
        a.cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
    };
    let cfg = ClientConfig {
        index_host: a
            .index_host
            .get_or_insert(defaults.index_host.clone())
            .clone(),
        min_delay: Duration::from_millis(
            *a.min_delay_ms
                .get_or_insert(defaults.min_delay.as_millis() as u64),
        ),
        concurrency: ctx.jobs.unwrap_or(1),
        retry: RetryPolicy {
            max_attempts: *a.max_attempts.get_or_insert(defaults.retry.max_attempts),
            ..defaults.retry
        },
        cache_dir,
        ..defaults
    };
    let client = CdxClient::new(cfg)?;
    let rows = trend(&client, &pattern, &from, &to, mode)?;
    for r in rows
        .iter()
        .filter(|r| r.status == RowStatus::Error || r.status == RowStatus::NotFound)
    {
        warn!(snapshot = %r.snapshot.id, error = r.error.as_deref().unwrap_or(""), "snapshot failed");
    }
    info!(
        rows = rows.len(),
        requests = client.requests_sent(),
        retries = client.retries(),
        "trend complete"
    );
    write_text(&out, &render_trend_csv(&rows))?;

    let mut run = RunManifest::new("cc-trend", &a);
    run.output(&out)?;
    run.details = json!({ "rows": rows });
    run.write(&sidecar(&out))?;
    Ok(0)
}

struct Check {
    kind: &'static str,
    path: PathBuf,
    outcome: Result<Value>,
}

pub fn validate(ctx: &Context, flags: &ValidateArgs) -> Result<u8> {
    let a = ctx.resolve("validate", flags)?;
    let mut checks = Vec::new();
    let mut archive = None;

    if let Some(p) = &a.manifest {
        let outcome = validate_manifest_file(p, a.root.as_deref())
            .map_err(anyhow::Error::from)
            .and_then(|r| {
                let ok = r.valid;
                let v = serde_json::to_value(&r)?;
                if ok {
                    Ok(v)
                } else {
                    Err(anyhow::anyhow!(
                        "{} missing file(s): {}",
                        r.missing.len(),
                        r.missing.join(", ")
                    ))
                }
            });
        checks.push(Check {
            kind: "manifest",
            path: p.clone(),
            outcome,
        });
    }
    if let Some(p) = &a.archive {
        let outcome = read_archive(p).map_err(anyhow::Error::from).map(|ar| {
            let v = json!({
                "backbone_id": ar.backbone_id(),
                "feature_dim": ar.feature_dim(),
                "count": ar.len(),
                "normalized": ar.normalized(),
            });
            archive = Some(ar);
            v
        });
        checks.push(Check {
            kind: "archive",
            path: p.clone(),
            outcome,
        });
    }
    if let (Some(ar), Some(p)) = (&archive, &a.manifest) {
        let outcome = DatasetManifest::read(p)
            .map_err(anyhow::Error::from)
            .and_then(|m| {
                let train = select_rows(ar, Some(&m), Split::Train)?.len();
                let test = select_rows(ar, Some(&m), Split::Test)?.len();
                Ok(json!({ "train_rows": train, "test_rows": test }))
            });
        checks.push(Check {
            kind: "archive+manifest",
            path: p.clone(),
            outcome,
        });
    }
    if let Some(p) = &a.pool {
        let outcome = TextPool::read(p)
            .map(|pool| json!({ "backbone_id": pool.backbone_id(), "dim": pool.dim(), "entries": pool.len() }))
            .map_err(anyhow::Error::from);
        checks.push(Check {
            kind: "pool",
            path: p.clone(),
            outcome,
        });
    }
    if let Some(p) = &a.model {
        let outcome = ProbeModel::load(p)
            .map(|m| json!({ "backbone_id": m.backbone_id, "feature_dim": m.feature_dim() }))
            .map_err(anyhow::Error::from);
        checks.push(Check {
            kind: "model",
            path: p.clone(),
            outcome,
        });
    }
    if let Some(p) = &a.report {
        let outcome = fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .and_then(|t| Ok(parse_report_csv(&t)?))
            .map(|rows| json!({ "rows": rows.len() }));
        checks.push(Check {
            kind: "report",
            path: p.clone(),
            outcome,
        });
    }
    if checks.is_empty() {
        return Err(usage(
            "nothing to validate; give --manifest, --archive, --pool, --model or --report",
        ));
    }

    let mut code = 0u8;
    let summary: Vec<Value> = checks
        .iter()
        .map(|c| match &c.outcome {
            Ok(details) => {
                json!({ "kind": c.kind, "path": c.path, "ok": true, "details": details })
            }
            Err(e) => {
                code = code.max(crate::exit_code(e));
                json!({ "kind": c.kind, "path": c.path, "ok": false, "error": format!("{e:#}") })
            }
        })
        .collect();
    let text =
        serde_json::to_string_pretty(&json!({ "valid": code == 0, "checks": summary }))? + "\n";
    print!("{text}");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
        let mut run = RunManifest::new("validate", &a);
        run.output(out)?;
        run.write(&sidecar(out))?;
    }
    Ok(code)
}
