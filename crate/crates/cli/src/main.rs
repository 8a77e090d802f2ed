//! `memevir`: command-line entry point for the meme-virality pipeline.
//!
//! Every subcommand reads an optional TOML config (`--config`), applies
//! flag overrides, writes its outputs into a run directory and records a
//! `manifest_<command>.json` there. Exit codes: 0 success, 1 usage error,
//! 2 data or validation error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use meme_virality::collector::{
    track_post, HttpSource, PostSource, ReplaySource, SimClock, SystemClock, Termination, TrackResult,
};
use meme_virality::eval::{evaluate, MetricReport};
use meme_virality::experiments::{
    file_sha256, importance_over_time, run_ablation, run_window_sweep, write_csv, write_sweep_long,
    write_virality_rates, ExperimentConfig, ExperimentError, PreparedDataset, RunManifest,
};
use meme_virality::features::{all_modalities, Modality, ModalitySet};
use meme_virality::ingest::{parse_dataset, write_dataset, PostRecord};
use meme_virality::labeling::LabelingArtifacts;
use meme_virality::models::{train, ImportanceType, ModelError, ModelKind, TrainedModel, MODEL_FORMAT_VERSION};
use meme_virality::preprocess::PreprocessModel;
use meme_virality::synth::{generate, SignalPlacement, SynthConfig};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "memevir", version, about = "Early prediction of meme virality", arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run directory (default: the data file's directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config with `[experiment]`, `[synth]` and `[collect]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset file and report every rejected line.
    Validate(DataArgs),
    /// Generate a synthetic corpus with planted labels.
    Synth(SynthArgs),
    /// Track posts on the polling schedule and write their series.
    Collect(CollectArgs),
    /// Fit the labeling procedure on the training split and label every post.
    Label(DataArgs),
    /// Write window-scoped feature matrices.
    Features(FeaturesArgs),
    /// Train one classifier at one window.
    Train(TrainArgs),
    /// Score a trained model on the test split.
    Evaluate(EvaluateArgs),
    /// Train and evaluate every model at every window.
    Sweep(SweepArgs),
    /// Drop one modality at a time and retrain gbt.
    Ablate(AblateArgs),
    /// Count the top-k gbt features per modality at each window.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Line-delimited post records.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    viral_frac: Option<f64>,
    /// temporal, network, static or mixed.
    #[arg(long)]
    placement: Option<SignalPlacement>,
    /// Use the widely separated viral/non-viral engagement preset.
    #[arg(long)]
    well_separated: bool,
}

#[derive(Debug, Args)]
struct CollectArgs {
    /// Replay the series of a recorded dataset through the tracker.
    #[arg(long, conflicts_with = "source_url", required_unless_present = "source_url")]
    replay: Option<PathBuf>,
    /// Base URL of an HTTP post source.
    #[arg(long, requires = "posts")]
    source_url: Option<String>,
    /// Post metadata records to track over HTTP.
    #[arg(long)]
    posts: Option<PathBuf>,
    /// Header passed through to the HTTP source, as `Name: value`.
    #[arg(long)]
    auth_header: Option<String>,
    /// Tracking horizon in minutes.
    #[arg(long)]
    until: Option<f64>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<Modality>>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "gbt")]
    model: ModelKind,
    #[arg(long, default_value_t = 120.0)]
    window: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Bundle written by `train`.
    #[arg(long)]
    model_file: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Cross-validation folds on the training split; 0 disables.
    #[arg(long)]
    cv_folds: Option<usize>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    window: Option<f64>,
    /// Modalities to exclude one at a time (default: all).
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<Modality>>,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    #[arg(long)]
    top_k: Option<usize>,
    /// gain, cover or frequency.
    #[arg(long)]
    importance_type: Option<String>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

/// Model and preprocessing fitted together at one window.
#[derive(Debug, Serialize, Deserialize)]
struct ModelBundle {
    window: f64,
    preprocess: PreprocessModel,
    model: TrainedModel,
}

#[derive(Debug, Serialize)]
struct LabelRow<'a> {
    post_id: &'a str,
    split: &'static str,
    hybrid_score: f64,
    label: u8,
}

#[derive(Debug, Serialize)]
struct PlantedRow<'a> {
    post_id: &'a str,
    planted: u8,
}

#[derive(Debug, Serialize)]
struct TrackRow<'a> {
    post_id: &'a str,
    termination: &'static str,
    snapshots: usize,
}

#[derive(Debug, Serialize)]
struct ValidationRow {
    line: usize,
    message: String,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    model: ModelKind,
    window: f64,
    threshold: f64,
    metrics: MetricReport,
}

fn window_tag(w: f64) -> String {
    if w.fract() == 0.0 {
        format!("{w:.0}")
    } else {
        w.to_string()
    }
}

struct Run {
    cfg: FileConfig,
    out: PathBuf,
}

impl Run {
    fn new(global: &GlobalArgs, data: Option<&Path>) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(p) => FileConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => FileConfig::default(),
        };
        if let Some(seed) = global.seed {
            cfg.experiment.seed = seed;
            cfg.synth.seed = seed;
        }
        let out = match (&global.out, data) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => d.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
            (None, None) => PathBuf::from("."),
        };
        let out = if out.as_os_str().is_empty() { PathBuf::from(".") } else { out };
        fs::create_dir_all(&out).map_err(|e| data_err(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(&self, mut manifest: RunManifest, outputs: &[PathBuf]) -> Result<()> {
        manifest.outputs = outputs
            .iter()
            .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
            .collect();
        let path = self.path(&format!("manifest_{}.json", manifest.command));
        manifest.write(&path).map_err(data_err)
    }
}

fn load_records(data: &Path) -> Result<Vec<PostRecord>> {
    let parsed = parse_dataset(data).map_err(data_err)?;
    if let Some(first) = parsed.diagnostics.first() {
        return Err(CliError::Data(format!(
            "{}: {} rejected line(s), first {first}; run `memevir validate`",
            data.display(),
            parsed.diagnostics.len()
        )));
    }
    Ok(parsed.records)
}

/// Filters, splits and labels, reusing `labeling.json` from the run
/// directory when it was fitted on the same training set and config.
fn prepare(run: &Run, data: &Path, cfg: &ExperimentConfig) -> Result<PreparedDataset> {
    let records = load_records(data)?;
    let path = run.path("labeling.json");
    let cached = if path.exists() {
        let a = LabelingArtifacts::load(&path).map_err(data_err)?;
        if a.config != cfg.labeling_config() {
            return Err(CliError::Data(format!(
                "{} was fitted with a different labeling config; rerun `memevir label`",
                path.display()
            )));
        }
        Some(a)
    } else {
        None
    };
    PreparedDataset::prepare(records, cfg, cached).map_err(|e| match e {
        ExperimentError::FingerprintMismatch => CliError::Data(format!(
            "{} was fitted on a different training set; rerun `memevir label`",
            path.display()
        )),
        other => data_err(other),
    })
}

fn dataset_manifest(run: &Run, command: &str, data: &Path, ds: &PreparedDataset) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, run.cfg.experiment.seed, &run.cfg).with_dataset(ds);
    m.dataset_sha256 = Some(file_sha256(data).map_err(data_err)?);
    Ok(m)
}

fn cmd_validate(run: &Run, a: &DataArgs) -> Result<()> {
    let parsed = parse_dataset(&a.data).map_err(data_err)?;
    let rows: Vec<ValidationRow> =
        parsed.diagnostics.iter().map(|d| ValidationRow { line: d.line, message: d.message.clone() }).collect();
    let report = run.path("validation_report.csv");
    write_csv(&report, &rows).map_err(data_err)?;
    let mut m = RunManifest::new("validate", run.cfg.experiment.seed, &run.cfg);
    m.dataset_sha256 = Some(file_sha256(&a.data).map_err(data_err)?);
    run.finish(m, &[report])?;
    println!("{} valid record(s), {} rejected line(s)", parsed.records.len(), parsed.diagnostics.len());
    for d in &parsed.diagnostics {
        eprintln!("{d}");
    }
    if parsed.diagnostics.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} rejected line(s)", parsed.diagnostics.len())))
    }
}

fn cmd_synth(run: &Run, a: &SynthArgs) -> Result<()> {
    let base = &run.cfg.synth;
    let mut cfg = if a.well_separated {
        SynthConfig { placement: base.placement, ..SynthConfig::well_separated(base.n_posts, base.seed) }
    } else {
        base.clone()
    };
    if let Some(n) = a.n {
        cfg.n_posts = n;
    }
    if let Some(f) = a.viral_frac {
        cfg.viral_frac = f;
    }
    if let Some(p) = a.placement {
        cfg.placement = p;
    }
    let corpus = generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let posts = run.path("posts.jsonl");
    write_dataset(&posts, &corpus.records).map_err(data_err)?;
    let planted = run.path("planted_labels.csv");
    let rows: Vec<PlantedRow> = corpus
        .records
        .iter()
        .zip(&corpus.planted)
        .map(|(r, &p)| PlantedRow { post_id: &r.post_id, planted: u8::from(p) })
        .collect();
    write_csv(&planted, &rows).map_err(data_err)?;
    let mut m = RunManifest::new("synth", cfg.seed, &cfg);
    m.dataset_sha256 = Some(file_sha256(&posts).map_err(data_err)?);
    run.finish(m, &[posts.clone(), planted])?;
    println!("{} posts ({} planted viral) -> {}", corpus.records.len(), cfg.n_viral(), posts.display());
    Ok(())
}

fn parse_header(h: &str) -> Result<(String, String)> {
    let (name, value) =
        h.split_once(':').ok_or_else(|| CliError::Usage(format!("auth header `{h}` is not `Name: value`")))?;
    Ok((name.trim().to_owned(), value.trim().to_owned()))
}

fn cmd_collect(run: &Run, a: &CollectArgs) -> Result<()> {
    let cc = &run.cfg.collect;
    let schedule = cc.schedule().map_err(|e| CliError::Usage(e.to_string()))?;
    let until = a.until.unwrap_or(cc.until_minutes);
    if until.is_nan() || until <= 0.0 {
        return Err(CliError::Usage("--until must be positive".into()));
    }
    let (schedule, retry) = (&schedule, &cc.retry);
    let (records, results): (Vec<PostRecord>, Vec<TrackResult>) = if let Some(replay) = &a.replay {
        let records = load_records(replay)?;
        let results = {
            use rayon::prelude::*;
            records
                .par_iter()
                .map(|r| {
                    let clock = Arc::new(SimClock::new(0.0));
                    let mut source = ReplaySource::new(clock.clone());
                    source.register(r);
                    track_post(&source, clock.as_ref(), &r.post_id, until, schedule, retry)
                })
                .collect()
        };
        (records, results)
    } else {
        let url = a.source_url.as_deref().expect("clap enforces replay or source_url");
        let posts = a.posts.as_deref().expect("clap enforces posts with source_url");
        let records = load_records(posts)?;
        let header = a.auth_header.as_deref().map(parse_header).transpose()?;
        let source = HttpSource::new(url, header);
        let clock = SystemClock::new();
        let results = std::thread::scope(|s| {
            let handles: Vec<_> = records
                .iter()
                .map(|r| {
                    let (source, clock): (&dyn PostSource, &SystemClock) = (&source, &clock);
                    s.spawn(move || track_post(source, clock, &r.post_id, until, schedule, retry))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("tracking thread panicked")).collect()
        });
        (records, results)
    };
    let tracked: Vec<PostRecord> = records
        .into_iter()
        .zip(&results)
        .map(|(mut r, t)| {
            r.snapshots = t.snapshots.clone();
            r.removed = t.termination == Termination::Removed;
            r
        })
        .collect();
    let posts = run.path("posts.jsonl");
    write_dataset(&posts, &tracked).map_err(data_err)?;
    let report = run.path("collect_report.csv");
    let rows: Vec<TrackRow> = results
        .iter()
        .map(|t| TrackRow { post_id: &t.post_id, termination: t.termination.as_str(), snapshots: t.snapshots.len() })
        .collect();
    write_csv(&report, &rows).map_err(data_err)?;
    let mut m = RunManifest::new("collect", run.cfg.experiment.seed, &run.cfg);
    m.dataset_sha256 = Some(file_sha256(&posts).map_err(data_err)?);
    run.finish(m, &[posts, report])?;
    println!("tracked {} post(s)", results.len());
    Ok(())
}

fn cmd_label(run: &Run, a: &DataArgs) -> Result<()> {
    let cfg = &run.cfg.experiment;
    let records = load_records(&a.data)?;
    let ds = PreparedDataset::prepare(records, cfg, None).map_err(data_err)?;
    let labeling = run.path("labeling.json");
    ds.labeling.save(&labeling).map_err(data_err)?;
    let in_train: std::collections::HashSet<usize> = ds.split.train_indices.iter().copied().collect();
    let rows: Vec<LabelRow> = ds
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| LabelRow {
            post_id: &r.post_id,
            split: if in_train.contains(&i) { "train" } else { "test" },
            hybrid_score: ds.labeling.score(r),
            label: u8::from(ds.labels[i]),
        })
        .collect();
    let labels = run.path("labels.csv");
    write_csv(&labels, &rows).map_err(data_err)?;
    let mut outputs = vec![labeling, labels];
    outputs.extend(write_virality_rates(&run.out, &ds.records, &ds.labels).map_err(data_err)?);
    run.finish(dataset_manifest(run, "label", &a.data, &ds)?, &outputs)?;
    let positives = ds.labels.iter().filter(|&&l| l).count();
    println!(
        "labeled {} posts: {} viral ({:.2}%), tau = {:.4}",
        ds.labels.len(),
        positives,
        100.0 * positives as f64 / ds.labels.len().max(1) as f64,
        ds.labeling.threshold.tau
    );
    Ok(())
}

fn cmd_features(run: &Run, a: &FeaturesArgs) -> Result<()> {
    let cfg = &run.cfg.experiment;
    let ds = prepare(run, &a.data, cfg)?;
    let windows = a.windows.clone().unwrap_or_else(|| cfg.windows.clone());
    let include: ModalitySet = a.modalities.as_ref().map_or_else(all_modalities, |m| m.iter().copied().collect());
    let mut outputs = Vec::new();
    for w in windows {
        let m = ds.matrix(w, &include).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = run.path(&format!("features_w{}.csv", window_tag(w)));
        m.write(&path).map_err(data_err)?;
        outputs.push(path);
    }
    run.finish(dataset_manifest(run, "features", &a.data, &ds)?, &outputs)?;
    println!("wrote {} feature matrices", outputs.len());
    Ok(())
}

fn cmd_train(run: &Run, a: &TrainArgs) -> Result<()> {
    let cfg = &run.cfg.experiment;
    let ds = prepare(run, &a.data, cfg)?;
    let m = ds.matrix(a.window, &all_modalities()).map_err(|e| CliError::Usage(e.to_string()))?;
    let tr = m.select_rows(&ds.split.train_indices);
    let preprocess = PreprocessModel::fit(&tr).map_err(data_err)?;
    let x = preprocess.transform(&tr).map_err(data_err)?;
    let model = train(&cfg.model_config(a.model), &x.x, &ds.train_labels(), &x.names()).map_err(data_err)?;
    let path = run.path(&format!("model_{}_w{}.json", a.model, window_tag(a.window)));
    let bundle = ModelBundle { window: a.window, preprocess, model };
    fs::write(&path, serde_json::to_string(&bundle).map_err(data_err)?).map_err(data_err)?;
    run.finish(dataset_manifest(run, "train", &a.data, &ds)?, std::slice::from_ref(&path))?;
    println!("trained {} at {} min -> {}", a.model, window_tag(a.window), path.display());
    Ok(())
}

fn cmd_evaluate(run: &Run, a: &EvaluateArgs) -> Result<()> {
    let cfg = &run.cfg.experiment;
    let text = fs::read_to_string(&a.model_file).map_err(|e| data_err(format!("{}: {e}", a.model_file.display())))?;
    let bundle: ModelBundle = serde_json::from_str(&text).map_err(data_err)?;
    if bundle.model.format_version != MODEL_FORMAT_VERSION {
        return Err(data_err(ModelError::Version(bundle.model.format_version)));
    }
    let ds = prepare(run, &a.data, cfg)?;
    let m = ds.matrix(bundle.window, &all_modalities()).map_err(data_err)?;
    let te = bundle.preprocess.transform(&m.select_rows(&ds.split.test_indices)).map_err(data_err)?;
    let probs = bundle.model.predict_named(&te.x, &te.names()).map_err(data_err)?;
    let metrics = evaluate(&ds.test_labels(), &probs, cfg.f1_threshold).map_err(data_err)?;
    let kind = bundle.model.kind();
    let report = Evaluation { model: kind, window: bundle.window, threshold: cfg.f1_threshold, metrics };
    let path = run.path(&format!("evaluation_{}_w{}.json", kind, window_tag(bundle.window)));
    fs::write(&path, serde_json::to_string_pretty(&report).map_err(data_err)?).map_err(data_err)?;
    run.finish(dataset_manifest(run, "evaluate", &a.data, &ds)?, &[path])?;
    println!(
        "{kind} @ {} min: PR-AUC {:.4}, ROC-AUC {:.4}, F1 {:.4}",
        window_tag(bundle.window),
        report.metrics.pr_auc,
        report.metrics.roc_auc,
        report.metrics.f1
    );
    Ok(())
}

fn cmd_sweep(run: &Run, a: &SweepArgs) -> Result<()> {
    let mut cfg = run.cfg.experiment.clone();
    if let Some(w) = &a.windows {
        cfg.windows = w.clone();
    }
    if let Some(m) = &a.models {
        cfg.models = m.clone();
    }
    if let Some(k) = a.cv_folds {
        cfg.cv_folds = k;
    }
    let ds = prepare(run, &a.data, &cfg)?;
    let rows = run_window_sweep(&ds, &cfg).map_err(data_err)?;
    let wide = run.path("window_sweep.csv");
    write_csv(&wide, &rows).map_err(data_err)?;
    let long = run.path("window_sweep_long.csv");
    write_sweep_long(&long, &rows).map_err(data_err)?;
    let mut m = RunManifest::new("sweep", cfg.seed, &cfg).with_dataset(&ds);
    m.dataset_sha256 = Some(file_sha256(&a.data).map_err(data_err)?);
    run.finish(m, &[wide, long])?;
    for r in &rows {
        println!("{:>6} min  {:<13} PR-AUC {:.4}  ROC-AUC {:.4}", window_tag(r.window), r.model, r.pr_auc, r.roc_auc);
    }
    Ok(())
}

fn cmd_ablate(run: &Run, a: &AblateArgs) -> Result<()> {
    let cfg = &run.cfg.experiment;
    let window = a.window.unwrap_or(cfg.ablation_window);
    let exclude = a.exclude.clone().unwrap_or_else(|| Modality::ALL.to_vec());
    let ds = prepare(run, &a.data, cfg)?;
    let rows = run_ablation(&ds, window, &exclude, cfg).map_err(data_err)?;
    let path = run.path("ablation.csv");
    write_csv(&path, &rows).map_err(data_err)?;
    run.finish(dataset_manifest(run, "ablate", &a.data, &ds)?, &[path])?;
    for r in &rows {
        println!("{:<20} PR-AUC {:.4}  ROC-AUC {:.4}  ({} columns)", r.setting, r.pr_auc, r.roc_auc, r.n_features);
    }
    Ok(())
}

fn cmd_importance(run: &Run, a: &ImportanceArgs) -> Result<()> {
    let mut cfg = run.cfg.experiment.clone();
    if let Some(t) = &a.importance_type {
        cfg.importance = match t.as_str() {
            "gain" => ImportanceType::Gain,
            "cover" => ImportanceType::Cover,
            "frequency" => ImportanceType::Frequency,
            other => return Err(CliError::Usage(format!("unknown importance type `{other}`"))),
        };
    }
    let windows = a.windows.clone().unwrap_or_else(|| cfg.windows.clone());
    let top_k = a.top_k.unwrap_or(cfg.top_k);
    let ds = prepare(run, &a.data, &cfg)?;
    let report = importance_over_time(&ds, &windows, top_k, &cfg).map_err(data_err)?;
    let counts = run.path("importance_counts.csv");
    write_csv(&counts, &report.counts).map_err(data_err)?;
    let features = run.path("importance_features.csv");
    write_csv(&features, &report.features).map_err(data_err)?;
    let mut m = RunManifest::new("importance", cfg.seed, &cfg).with_dataset(&ds);
    m.dataset_sha256 = Some(file_sha256(&a.data).map_err(data_err)?);
    run.finish(m, &[counts, features])?;
    for w in &windows {
        let c = report.counts_at(*w);
        let parts: Vec<String> = c.iter().map(|(m, n)| format!("{m}={n}")).collect();
        println!("{:>6} min  {}", window_tag(*w), parts.join(" "));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(data_err)?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Validate(a) => cmd_validate(&Run::new(g, Some(&a.data))?, a),
        Command::Synth(a) => cmd_synth(&Run::new(g, None)?, a),
        Command::Collect(a) => {
            let data = a.replay.as_deref().or(a.posts.as_deref());
            cmd_collect(&Run::new(g, data)?, a)
        }
        Command::Label(a) => cmd_label(&Run::new(g, Some(&a.data))?, a),
        Command::Features(a) => cmd_features(&Run::new(g, Some(&a.data))?, a),
        Command::Train(a) => cmd_train(&Run::new(g, Some(&a.data))?, a),
        Command::Evaluate(a) => cmd_evaluate(&Run::new(g, Some(&a.data))?, a),
        Command::Sweep(a) => cmd_sweep(&Run::new(g, Some(&a.data))?, a),
        Command::Ablate(a) => cmd_ablate(&Run::new(g, Some(&a.data))?, a),
        Command::Importance(a) => cmd_importance(&Run::new(g, Some(&a.data))?, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
