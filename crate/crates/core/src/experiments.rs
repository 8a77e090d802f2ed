//! Window sweep, modality ablation and importance-over-time studies, plus
//! their CSV reports and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Datelike, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{chronological_split, cross_validate, evaluate, EvalError, SplitAssignment};
use crate::features::{all_modalities, assemble_matrix, FeatureMatrix, Modality, ModalitySet, WindowSpec};
use crate::ingest::{FilterSummary, PostRecord, QualityFilter};
use crate::labeling::{LabelingArtifacts, LabelingConfig, LabelingError, TrainingFingerprint};
use crate::models::{
    train, ForestConfig, GbtConfig, ImportanceType, LogRegConfig, MlpConfig, ModelConfig, ModelError, ModelKind,
};
use crate::preprocess::{PreprocessError, PreprocessModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("window {0} is not a positive number of minutes")]
    Window(f64),
    #[error("labeling artifacts were fitted on a different training set")]
    FingerprintMismatch,
    #[error("the {0} set has a single class; metrics are undefined")]
    SingleClass(&'static str),
    #[error("no models selected")]
    NoModels,
    #[error("{model} does not expose feature importances")]
    NoImportance { model: ModelKind },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-kind hyperparameters; the run seed overrides each `seed`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPresets {
    pub logreg: LogRegConfig,
    pub gbt: GbtConfig,
    pub mlp: MlpConfig,
    pub random_forest: ForestConfig,
}

impl ModelPresets {
    pub fn config(&self, kind: ModelKind, seed: u64) -> ModelConfig {
        let c = match kind {
            ModelKind::Logreg => ModelConfig::Logreg(self.logreg.clone()),
            ModelKind::Gbt => ModelConfig::Gbt(self.gbt.clone()),
            ModelKind::Mlp => ModelConfig::Mlp(self.mlp.clone()),
            ModelKind::RandomForest => ModelConfig::RandomForest(self.random_forest.clone()),
        };
        c.with_seed(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_frac: f64,
    pub filter: QualityFilter,
    pub windows: Vec<f64>,
    pub models: Vec<ModelKind>,
    /// Folds for cross-validation on the training part; `0` disables it.
    pub cv_folds: usize,
    pub f1_threshold: f64,
    pub ablation_window: f64,
    pub top_k: usize,
    pub importance: ImportanceType,
    pub labeling: LabelingConfig,
    pub presets: ModelPresets,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            train_frac: 0.8,
            filter: QualityFilter::default(),
            windows: WindowSpec::SWEEP.to_vec(),
            models: vec![ModelKind::Logreg, ModelKind::Gbt, ModelKind::Mlp],
            cv_folds: 5,
            f1_threshold: 0.5,
            ablation_window: 120.0,
            top_k: 30,
            importance: ImportanceType::Gain,
            labeling: LabelingConfig::default(),
            presets: ModelPresets::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn model_config(&self, kind: ModelKind) -> ModelConfig {
        self.presets.config(kind, self.seed)
    }

    /// Labeling config with the auxiliary forest seeded from the run seed.
    pub fn labeling_config(&self) -> LabelingConfig {
        let mut c = self.labeling.clone();
        c.forest.seed = self.seed;
        c
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Filtered records, chronological split, fitted labeling and labels.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub records: Vec<PostRecord>,
    pub filter: FilterSummary,
    pub split: SplitAssignment,
    pub labeling: LabelingArtifacts,
    pub labels: Vec<bool>,
}

impl PreparedDataset {
    /// Filters, splits and labels. Given `labeling` must have been fitted on
    /// exactly the resulting training set.
    pub fn prepare(
        records: Vec<PostRecord>,
        cfg: &ExperimentConfig,
        labeling: Option<LabelingArtifacts>,
    ) -> Result<Self, ExperimentError> {
        let (records, filter) = cfg.filter.apply(records);
        let split = chronological_split(&records, cfg.train_frac)?;
        let train: Vec<PostRecord> = split.train_indices.iter().map(|&i| records[i].clone()).collect();
        let labeling = match labeling {
            Some(a) => {
                if a.fingerprint != TrainingFingerprint::of(&train) {
                    return Err(ExperimentError::FingerprintMismatch);
                }
                a
            }
            None => LabelingArtifacts::fit(&train, &cfg.labeling_config())?,
        };
        let labels = labeling.label_all(&records);
        Ok(Self { records, filter, split, labeling, labels })
    }

    pub fn train_records(&self) -> Vec<PostRecord> {
        self.split.train_indices.iter().map(|&i| self.records[i].clone()).collect()
    }

    pub fn train_labels(&self) -> Vec<bool> {
        self.split.train_indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<bool> {
        self.split.test_indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Feature matrix of every record at window `minutes`.
    pub fn matrix(&self, minutes: f64, include: &ModalitySet) -> Result<FeatureMatrix, ExperimentError> {
        let w = WindowSpec::new(minutes).ok_or(ExperimentError::Window(minutes))?;
        Ok(assemble_matrix(&self.records, w, &self.labeling.caps, include))
    }
}

/// Train on the chronological training part, score the test part.
struct Fitted {
    pre: PreprocessModel,
    model: crate::models::TrainedModel,
    test_probs: Vec<f64>,
    train_seconds: f64,
}

fn fit_and_score(
    ds: &PreparedDataset,
    m: &FeatureMatrix,
    config: &ModelConfig,
) -> Result<Fitted, ExperimentError> {
    let tr = m.select_rows(&ds.split.train_indices);
    let te = m.select_rows(&ds.split.test_indices);
    let pre = PreprocessModel::fit(&tr)?;
    let xtr = pre.transform(&tr)?;
    let xte = pre.transform(&te)?;
    let start = Instant::now();
    let model = train(config, &xtr.x, &ds.train_labels(), &xtr.names())?;
    let train_seconds = start.elapsed().as_secs_f64();
    let test_probs = model.predict_proba(&xte.x)?;
    Ok(Fitted { pre, model, test_probs, train_seconds })
}

fn check_classes(y: &[bool], which: &'static str) -> Result<(), ExperimentError> {
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(ExperimentError::SingleClass(which));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: f64,
    pub model: ModelKind,
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub f1: f64,
    pub duration_seconds: f64,
    pub cv_pr_auc_mean: Option<f64>,
    pub cv_pr_auc_std: Option<f64>,
    pub cv_roc_auc_mean: Option<f64>,
    pub cv_roc_auc_std: Option<f64>,
    pub cv_f1_mean: Option<f64>,
    pub cv_f1_std: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub test_positives: usize,
}

/// One row per `(window, model)`: held-out test metrics, optional CV on the
/// training part, and training wall-clock time.
pub fn run_window_sweep(ds: &PreparedDataset, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    if cfg.models.is_empty() {
        return Err(ExperimentError::NoModels);
    }
    let y_test = ds.test_labels();
    let y_train = ds.train_labels();
    check_classes(&y_train, "training")?;
    check_classes(&y_test, "test")?;
    let include = all_modalities();
    let per_window: Vec<Vec<SweepRow>> = cfg
        .windows
        .par_iter()
        .map(|&w| {
            let m = ds.matrix(w, &include)?;
            let train_matrix = m.select_rows(&ds.split.train_indices);
            cfg.models
                .iter()
                .map(|&kind| {
                    let config = cfg.model_config(kind);
                    let fit = fit_and_score(ds, &m, &config)?;
                    let test = evaluate(&y_test, &fit.test_probs, cfg.f1_threshold)?;
                    let cv = if cfg.cv_folds >= 2 {
                        Some(cross_validate(&config, &train_matrix, &y_train, cfg.cv_folds, cfg.seed, cfg.f1_threshold)?)
                    } else {
                        None
                    };
                    Ok(SweepRow {
                        window: w,
                        model: kind,
                        pr_auc: test.pr_auc,
                        roc_auc: test.roc_auc,
                        f1: test.f1,
                        duration_seconds: fit.train_seconds,
                        cv_pr_auc_mean: cv.as_ref().map(|c| c.pr_auc.mean),
                        cv_pr_auc_std: cv.as_ref().map(|c| c.pr_auc.std),
                        cv_roc_auc_mean: cv.as_ref().map(|c| c.roc_auc.mean),
                        cv_roc_auc_std: cv.as_ref().map(|c| c.roc_auc.std),
                        cv_f1_mean: cv.as_ref().map(|c| c.f1.mean),
                        cv_f1_std: cv.as_ref().map(|c| c.f1.std),
                        n_train: y_train.len(),
                        n_test: y_test.len(),
                        test_positives: test.n_pos,
                    })
                })
                .collect::<Result<Vec<_>, ExperimentError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `baseline` or `exclude_<modality>`.
    pub setting: String,
    pub excluded: Option<Modality>,
    pub window: f64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub f1: f64,
    pub n_features: usize,
}

/// GBT with all modalities, then with each listed modality removed.
pub fn run_ablation(
    ds: &PreparedDataset,
    window: f64,
    modalities: &[Modality],
    cfg: &ExperimentConfig,
) -> Result<Vec<AblationRow>, ExperimentError> {
    let y_test = ds.test_labels();
    check_classes(&ds.train_labels(), "training")?;
    check_classes(&y_test, "test")?;
    let full = ds.matrix(window, &all_modalities())?;
    let mut settings: Vec<Option<Modality>> = vec![None];
    settings.extend(modalities.iter().copied().map(Some));
    let config = cfg.model_config(ModelKind::Gbt);
    settings
        .par_iter()
        .map(|&excluded| {
            let mut keep = all_modalities();
            if let Some(m) = excluded {
                keep.remove(&m);
            }
            let m = full.restrict(&keep);
            let fit = fit_and_score(ds, &m, &config)?;
            let r = evaluate(&y_test, &fit.test_probs, cfg.f1_threshold)?;
            Ok(AblationRow {
                setting: excluded.map_or_else(|| "baseline".to_owned(), |m| format!("exclude_{m}")),
                excluded,
                window,
                pr_auc: r.pr_auc,
                roc_auc: r.roc_auc,
                f1: r.f1,
                n_features: fit.pre.output_columns().len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportanceRow {
    pub window: f64,
    pub rank: usize,
    pub feature: String,
    pub modality: Modality,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityCountRow {
    pub window: f64,
    pub modality: Modality,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub counts: Vec<ModalityCountRow>,
    pub features: Vec<FeatureImportanceRow>,
}

impl ImportanceReport {
    pub fn counts_at(&self, window: f64) -> BTreeMap<Modality, usize> {
        self.counts.iter().filter(|r| r.window == window).map(|r| (r.modality, r.count)).collect()
    }
}

/// Importances summed per source feature (one-hot columns fold into their
/// categorical), ranked by descending importance then name.
pub fn rank_parent_features(
    columns: &[crate::preprocess::OutputColumn],
    importances: &[f64],
) -> Vec<(String, Modality, f64)> {
    let mut agg: BTreeMap<&str, (Modality, f64)> = BTreeMap::new();
    for (c, &v) in columns.iter().zip(importances) {
        agg.entry(c.parent.as_str()).or_insert((c.modality, 0.0)).1 += v;
    }
    let mut ranked: Vec<(String, Modality, f64)> =
        agg.into_iter().map(|(name, (m, v))| (name.to_owned(), m, v)).collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Per window: GBT importances, top-`k` source features counted per modality.
pub fn importance_over_time(
    ds: &PreparedDataset,
    windows: &[f64],
    top_k: usize,
    cfg: &ExperimentConfig,
) -> Result<ImportanceReport, ExperimentError> {
    check_classes(&ds.train_labels(), "training")?;
    let config = cfg.model_config(ModelKind::Gbt);
    let include = all_modalities();
    let per_window: Vec<ImportanceReport> = windows
        .par_iter()
        .map(|&w| {
            let m = ds.matrix(w, &include)?;
            let fit = fit_and_score(ds, &m, &config)?;
            let imp = fit
                .model
                .importances_of(cfg.importance)
                .ok_or(ExperimentError::NoImportance { model: fit.model.kind() })?;
            let ranked = rank_parent_features(&fit.pre.output_columns(), &imp);
            let mut counts: BTreeMap<Modality, usize> = Modality::ALL.into_iter().map(|m| (m, 0)).collect();
            for (_, m, _) in ranked.iter().take(top_k) {
                *counts.get_mut(m).expect("all modalities present") += 1;
            }
            Ok(ImportanceReport {
                counts: counts.into_iter().map(|(modality, count)| ModalityCountRow { window: w, modality, count }).collect(),
                features: ranked
                    .into_iter()
                    .enumerate()
                    .map(|(i, (feature, modality, importance))| FeatureImportanceRow {
                        window: w,
                        rank: i + 1,
                        feature,
                        modality,
                        importance,
                    })
                    .collect(),
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut out = ImportanceReport::default();
    for r in per_window {
        out.counts.extend(r.counts);
        out.features.extend(r.features);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViralityRateRow {
    pub group: String,
    pub n: usize,
    pub n_viral: usize,
    pub rate: f64,
}

/// Labeled-virality rate per value of `key`, groups sorted by name.
pub fn virality_rates(
    records: &[PostRecord],
    labels: &[bool],
    key: impl Fn(&PostRecord) -> String,
) -> Vec<ViralityRateRow> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, &l) in records.iter().zip(labels) {
        let e = acc.entry(key(r)).or_default();
        e.0 += 1;
        e.1 += usize::from(l);
    }
    acc.into_iter()
        .map(|(group, (n, v))| ViralityRateRow { group, n, n_viral: v, rate: v as f64 / n as f64 })
        .collect()
}

type GroupKey = Box<dyn Fn(&PostRecord) -> String>;

/// Writes `virality_by_{language_group,media_type,hour,weekday}.csv`.
pub fn write_virality_rates(dir: &Path, records: &[PostRecord], labels: &[bool]) -> Result<Vec<PathBuf>, ExperimentError> {
    let groups: [(&str, GroupKey); 4] = [
        ("language_group", Box::new(|r| r.subreddit.language_group.as_str().to_owned())),
        ("media_type", Box::new(|r| r.media_type.as_str().to_owned())),
        ("hour", Box::new(|r| format!("{:02}", r.created_utc.hour()))),
        ("weekday", Box::new(|r| r.created_utc.weekday().to_string())),
    ];
    groups
        .iter()
        .map(|(name, key)| {
            let path = dir.join(format!("virality_by_{name}.csv"));
            write_csv(&path, &virality_rates(records, labels, key))?;
            Ok(path)
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv { path: path.to_owned(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ExperimentError::Io { path: path.to_owned(), source })
}

/// `window,model,evaluation,metric,value` rows for plotting.
pub fn write_sweep_long(path: &Path, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io { path: path.to_owned(), source };
    let mut out = String::from("window,model,evaluation,metric,value\n");
    for r in rows {
        let mut push = |eval: &str, metric: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push_str(&format!("{},{},{eval},{metric},{v}\n", r.window, r.model));
            }
        };
        push("test", "pr_auc", Some(r.pr_auc));
        push("test", "roc_auc", Some(r.roc_auc));
        push("test", "f1", Some(r.f1));
        push("cv", "pr_auc", r.cv_pr_auc_mean);
        push("cv", "roc_auc", r.cv_roc_auc_mean);
        push("cv", "f1", r.cv_f1_mean);
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)
}

/// Everything needed to re-run a command bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub dataset_sha256: Option<String>,
    pub training_fingerprint: Option<TrainingFingerprint>,
    pub labeling_sha256: Option<String>,
    pub filter: Option<FilterSummary>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        let value = serde_json::to_value(config).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("json value serializes");
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            seed,
            config_sha256: hex::encode(Sha256::digest(bytes)),
            config: value,
            dataset_sha256: None,
            training_fingerprint: None,
            labeling_sha256: None,
            filter: None,
            outputs: Vec::new(),
        }
    }

    pub fn with_dataset(mut self, ds: &PreparedDataset) -> Self {
        self.training_fingerprint = Some(ds.labeling.fingerprint.clone());
        self.labeling_sha256 = ds.labeling.to_json().ok().map(|j| hex::encode(Sha256::digest(j.as_bytes())));
        self.filter = Some(ds.filter);
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), ExperimentError> {
        fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|source| ExperimentError::Io { path: path.to_owned(), source })
    }
}

/// SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String, ExperimentError> {
    let bytes = fs::read(path).map_err(|source| ExperimentError::Io { path: path.to_owned(), source })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
