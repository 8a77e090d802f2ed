//! Data-driven virality labels.
//!
//! 1. Engagement volumes are normalized per 100k subreddit subscribers and
//!    capped at the training 99th percentile.
//! 2. A preliminary target marks the top share of training posts by the
//!    unweighted sum of normalized final volumes; an auxiliary random forest
//!    fitted on early-window engagement features against it yields
//!    importance-based weights `β_k`, scaled so the largest is 1.
//! 3. The hybrid score is `HS = Σ_k β_k f_k` over final engagement features.
//! 4. 1-D K-Means (k = 2) on training scores gives the threshold `τ` as the
//!    midpoint of the two centroids.
//! 5. A post is viral iff `HS ≥ τ`.
//!
//! Every fitted artifact depends on the training records only.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::features::series::{dynamics, NormalizedSeries};
use crate::features::{window_view, WindowSpec};
use crate::ingest::{EngagementSnapshot, PostRecord};
use crate::models::{train_forest, ForestConfig, ModelError};
use crate::scalar::{percentile_linear, Scalar};

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("subscribers < 1")]
    Subscribers,
    #[error("training set is empty")]
    EmptyTrain,
    #[error("no training record has snapshots")]
    NoSnapshots,
    #[error("top fraction {0} outside (0, 1)")]
    TopFraction(f64),
    #[error("no labeling windows configured")]
    NoWindows,
    #[error("window {0} is not a positive number of minutes")]
    Window(f64),
    #[error("preliminary target is constant; cannot learn weights")]
    ConstantTarget,
    #[error("all scores are identical; no threshold can separate them")]
    DegenerateScores,
    #[error("need at least two scores to fit a threshold")]
    TooFewScores,
    #[error("feature keys {features:?} do not match weight keys {weights:?}")]
    KeyMismatch { features: Vec<String>, weights: Vec<String> },
    #[error("unknown labeling feature `{0}`")]
    UnknownFeature(String),
    #[error("unsupported labeling artifact version {0}")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-100k-subscriber caps for the three engagement volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct NormalizationCaps<T = f64> {
    pub score: T,
    pub comments: T,
    pub crossposts: T,
}

impl<T: Scalar> NormalizationCaps<T> {
    /// Caps that never bind.
    pub fn unbounded() -> Self {
        Self { score: T::infinity(), comments: T::infinity(), crossposts: T::infinity() }
    }
}

/// `min(raw / subscribers · 100000, cap)`.
pub fn normalize_metric<T: Scalar>(raw: T, subscribers: u64, cap: T) -> Result<T, LabelingError> {
    if subscribers < 1 {
        return Err(LabelingError::Subscribers);
    }
    let per_100k = raw * T::lit(100_000.0) / T::from_u64(subscribers).expect("subscriber count representable");
    Ok(per_100k.min(cap))
}

fn per_100k(raw: f64, subscribers: u64) -> f64 {
    raw.max(0.0) * 100_000.0 / subscribers.max(1) as f64
}

/// 99th-percentile caps over the final snapshot of every training post.
///
/// A metric whose 99th percentile is zero falls back to its training maximum,
/// and to 1 when every training value is zero, so caps stay positive.
pub fn fit_p99_caps(train: &[PostRecord]) -> Result<NormalizationCaps, LabelingError> {
    if train.is_empty() {
        return Err(LabelingError::EmptyTrain);
    }
    let finals: Vec<(&EngagementSnapshot, u64)> =
        train.iter().filter_map(|r| r.last_snapshot().map(|s| (s, r.subreddit.subscribers))).collect();
    if finals.is_empty() {
        return Err(LabelingError::NoSnapshots);
    }
    let cap = |f: &dyn Fn(&EngagementSnapshot) -> f64| {
        let vals: Vec<f64> = finals.iter().map(|(s, n)| per_100k(f(s), *n)).collect();
        let p = percentile_linear(&vals, 0.99).expect("non-empty");
        if p > 0.0 {
            p
        } else {
            let max = vals.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };
    Ok(NormalizationCaps {
        score: cap(&|s| s.score as f64),
        comments: cap(&|s| s.comments as f64),
        crossposts: cap(&|s| s.crossposts as f64),
    })
}

/// Engagement features available to the auxiliary forest and the hybrid score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelingFeature {
    NormScore,
    NormComments,
    NormCrossposts,
    PeakVelocity,
    PeakAcceleration,
    TimeToTakeoff,
}

impl LabelingFeature {
    pub const ALL: [LabelingFeature; 6] = [
        LabelingFeature::NormScore,
        LabelingFeature::NormComments,
        LabelingFeature::NormCrossposts,
        LabelingFeature::PeakVelocity,
        LabelingFeature::PeakAcceleration,
        LabelingFeature::TimeToTakeoff,
    ];

    /// Volumes plus peak velocity and peak acceleration.
    pub const DEFAULT: [LabelingFeature; 5] = [
        LabelingFeature::NormScore,
        LabelingFeature::NormComments,
        LabelingFeature::NormCrossposts,
        LabelingFeature::PeakVelocity,
        LabelingFeature::PeakAcceleration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelingFeature::NormScore => "norm_score",
            LabelingFeature::NormComments => "norm_comments",
            LabelingFeature::NormCrossposts => "norm_crossposts",
            LabelingFeature::PeakVelocity => "peak_velocity",
            LabelingFeature::PeakAcceleration => "peak_acceleration",
            LabelingFeature::TimeToTakeoff => "time_to_takeoff",
        }
    }
}

impl fmt::Display for LabelingFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelingFeature {
    type Err = LabelingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelingFeature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| LabelingError::UnknownFeature(s.to_owned()))
    }
}

/// Named feature values `f_k`; values that have not occurred are 0.
pub type FinalEngagementFeatures<T = f64> = BTreeMap<String, T>;

/// Engagement features of a snapshot series (a window view or the full
/// horizon), in the order of `features`.
pub fn engagement_vector(
    snaps: &[EngagementSnapshot],
    subscribers: u64,
    caps: &NormalizationCaps,
    features: &[LabelingFeature],
) -> Vec<f64> {
    if snaps.is_empty() {
        return vec![0.0; features.len()];
    }
    let s = NormalizedSeries::from_snapshots(snaps, subscribers, caps);
    let d = dynamics(&s.t, &s.score);
    let last = s.len() - 1;
    features
        .iter()
        .map(|f| match f {
            LabelingFeature::NormScore => s.score[last],
            LabelingFeature::NormComments => s.comments[last],
            LabelingFeature::NormCrossposts => s.crossposts[last],
            LabelingFeature::PeakVelocity => d.peak_velocity.unwrap_or(0.0),
            LabelingFeature::PeakAcceleration => d.peak_acceleration.unwrap_or(0.0),
            LabelingFeature::TimeToTakeoff => d.time_to_takeoff.unwrap_or(0.0),
        })
        .collect()
}

/// Final engagement features over the full tracked horizon.
pub fn final_features(
    r: &PostRecord,
    caps: &NormalizationCaps,
    features: &[LabelingFeature],
) -> FinalEngagementFeatures {
    let v = engagement_vector(&r.snapshots, r.subreddit.subscribers, caps, features);
    features.iter().map(|f| f.as_str().to_owned()).zip(v).collect()
}

/// Number of preliminary positives among `n` posts.
pub fn preliminary_count(n: usize, top_frac: f64) -> usize {
    ((top_frac * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Top `⌈top_frac · n⌉` posts by the unweighted sum of normalized final
/// volumes; ties go to the smaller `post_id`.
pub fn make_preliminary_target(
    train: &[PostRecord],
    caps: &NormalizationCaps,
    top_frac: f64,
) -> Result<Vec<bool>, LabelingError> {
    if !(top_frac > 0.0 && top_frac < 1.0) {
        return Err(LabelingError::TopFraction(top_frac));
    }
    let vol = [LabelingFeature::NormScore, LabelingFeature::NormComments, LabelingFeature::NormCrossposts];
    let sums: Vec<f64> = train
        .iter()
        .map(|r| engagement_vector(&r.snapshots, r.subreddit.subscribers, caps, &vol).iter().sum())
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then_with(|| train[a].post_id.cmp(&train[b].post_id)));
    let mut labels = vec![false; train.len()];
    for &i in order.iter().take(preliminary_count(train.len(), top_frac)) {
        labels[i] = true;
    }
    Ok(labels)
}

/// Hybrid weights `β_k`, the largest equal to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct HybridWeights<T = f64> {
    pub weights: BTreeMap<String, T>,
    pub source_windows: Vec<f64>,
}

impl<T: Scalar> HybridWeights<T> {
    /// Published reference weights: score 1.0, comments 0.44, peak velocity 0.14.
    pub fn reference() -> Self {
        let weights = [("norm_score", 1.0), ("norm_comments", 0.44), ("peak_velocity", 0.14)]
            .into_iter()
            .map(|(k, v)| (k.to_owned(), T::lit(v)))
            .collect();
        Self { weights, source_windows: Vec::new() }
    }

    pub fn get(&self, feature: &str) -> Option<T> {
        self.weights.get(feature).copied()
    }

    /// Scales importances so the largest becomes 1. All-zero input maps to
    /// equal weights of 1.
    pub fn from_importances(importances: BTreeMap<String, T>, source_windows: Vec<f64>) -> Self {
        let max = importances.values().copied().fold(T::zero(), T::max);
        let weights = importances
            .into_iter()
            .map(|(k, v)| (k, if max > T::zero() { v / max } else { T::one() }))
            .collect();
        Self { weights, source_windows }
    }
}

/// Fits one auxiliary forest per window and averages the importances.
pub fn learn_hybrid_weights(
    train: &[PostRecord],
    caps: &NormalizationCaps,
    windows: &[f64],
    prelim: &[bool],
    features: &[LabelingFeature],
    forest: &ForestConfig,
) -> Result<HybridWeights, LabelingError> {
    if windows.is_empty() {
        return Err(LabelingError::NoWindows);
    }
    if prelim.iter().all(|&l| l) || prelim.iter().all(|&l| !l) {
        return Err(LabelingError::ConstantTarget);
    }
    let mut total = vec![0.0; features.len()];
    for &m in windows {
        let w = WindowSpec::new(m).ok_or(LabelingError::Window(m))?;
        let rows: Vec<Vec<f64>> = train
            .iter()
            .map(|r| engagement_vector(window_view(r, w), r.subreddit.subscribers, caps, features))
            .collect();
        let x = DenseMatrix::from_rows(&rows);
        let model = train_forest(&x, prelim, forest)?;
        for (t, v) in total.iter_mut().zip(&model.importances) {
            *t += v / windows.len() as f64;
        }
    }
    let imp = features.iter().map(|f| f.as_str().to_owned()).zip(total).collect();
    Ok(HybridWeights::from_importances(imp, windows.to_vec()))
}

/// `HS = Σ_k β_k f_k`; feature and weight keys must coincide.
pub fn hybrid_score<T: Scalar>(f: &BTreeMap<String, T>, w: &HybridWeights<T>) -> Result<T, LabelingError> {
    if !f.keys().eq(w.weights.keys()) {
        return Err(LabelingError::KeyMismatch {
            features: f.keys().cloned().collect(),
            weights: w.weights.keys().cloned().collect(),
        });
    }
    Ok(f.iter().zip(w.weights.values()).map(|((_, &v), &b)| v * b).sum())
}

/// Record count, creation-date range and a digest of the sorted post ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub count: usize,
    pub first_created: Option<DateTime<Utc>>,
    pub last_created: Option<DateTime<Utc>>,
    pub ids_sha256: String,
}

impl TrainingFingerprint {
    pub fn of(records: &[PostRecord]) -> Self {
        let mut ids: Vec<&str> = records.iter().map(|r| r.post_id.as_str()).collect();
        ids.sort_unstable();
        let mut h = Sha256::new();
        for id in ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        Self {
            count: records.len(),
            first_created: records.iter().map(|r| r.created_utc).min(),
            last_created: records.iter().map(|r| r.created_utc).max(),
            ids_sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ViralityThreshold<T = f64> {
    pub tau: T,
    pub low: T,
    pub high: T,
    pub iterations: usize,
    pub fitted_on: Option<TrainingFingerprint>,
}

/// Iteration cap for the 1-D K-Means.
pub const KMEANS_MAX_ITER: usize = 200;

/// Two-cluster 1-D K-Means started at the 10th and 90th percentiles (the
/// extremes when those coincide). Stops when no point changes cluster.
pub fn fit_threshold<T: Scalar>(scores: &[T]) -> Result<ViralityThreshold<T>, LabelingError> {
    if scores.len() < 2 {
        return Err(LabelingError::TooFewScores);
    }
    let mut x = scores.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
    let (min, max) = (x[0], x[x.len() - 1]);
    if min == max {
        return Err(LabelingError::DegenerateScores);
    }
    let mut lo = crate::scalar::percentile_sorted(&x, T::lit(0.1));
    let mut hi = crate::scalar::percentile_sorted(&x, T::lit(0.9));
    if lo >= hi {
        (lo, hi) = (min, max);
    }
    let mean = |s: &[T]| s.iter().copied().sum::<T>() / T::from_usize_lossy(s.len());
    let two = T::lit(2.0);
    let mut cut = usize::MAX;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        let mid = (lo + hi) / two;
        let next = x.partition_point(|&v| v < mid);
        if next == cut {
            break;
        }
        iterations += 1;
        cut = next;
        if cut > 0 {
            lo = mean(&x[..cut]);
        }
        if cut < x.len() {
            hi = mean(&x[cut..]);
        }
    }
    Ok(ViralityThreshold { tau: (lo + hi) / two, low: lo, high: hi, iterations, fitted_on: None })
}

/// Viral iff `score ≥ tau`.
pub fn assign_label<T: Scalar>(score: T, tau: T) -> bool {
    score >= tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub top_frac: f64,
    pub windows: Vec<f64>,
    pub features: Vec<LabelingFeature>,
    pub forest: ForestConfig,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            top_frac: 0.05,
            windows: vec![30.0, 60.0, 120.0],
            features: LabelingFeature::DEFAULT.to_vec(),
            forest: ForestConfig::default(),
        }
    }
}

pub const LABELING_FORMAT_VERSION: u32 = 1;

/// Everything needed to label new posts exactly as the training posts were.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingArtifacts {
    pub format_version: u32,
    pub config: LabelingConfig,
    pub caps: NormalizationCaps,
    pub weights: HybridWeights,
    pub threshold: ViralityThreshold,
    pub fingerprint: TrainingFingerprint,
}

impl LabelingArtifacts {
    pub fn fit(train: &[PostRecord], config: &LabelingConfig) -> Result<Self, LabelingError> {
        let caps = fit_p99_caps(train)?;
        let prelim = make_preliminary_target(train, &caps, config.top_frac)?;
        let weights = learn_hybrid_weights(train, &caps, &config.windows, &prelim, &config.features, &config.forest)?;
        let scores = train
            .iter()
            .map(|r| hybrid_score(&final_features(r, &caps, &config.features), &weights))
            .collect::<Result<Vec<_>, _>>()?;
        let fingerprint = TrainingFingerprint::of(train);
        let mut threshold = fit_threshold(&scores)?;
        threshold.fitted_on = Some(fingerprint.clone());
        Ok(Self { format_version: LABELING_FORMAT_VERSION, config: config.clone(), caps, weights, threshold, fingerprint })
    }

    pub fn score(&self, r: &PostRecord) -> f64 {
        let f = final_features(r, &self.caps, &self.config.features);
        hybrid_score(&f, &self.weights).expect("weights fitted on the same feature list")
    }

    pub fn label(&self, r: &PostRecord) -> bool {
        assign_label(self.score(r), self.threshold.tau)
    }

    pub fn label_all(&self, records: &[PostRecord]) -> Vec<bool> {
        records.iter().map(|r| self.label(r)).collect()
    }

    pub fn to_json(&self) -> Result<String, LabelingError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, LabelingError> {
        let a: LabelingArtifacts = serde_json::from_str(s)?;
        if a.format_version != LABELING_FORMAT_VERSION {
            return Err(LabelingError::Version(a.format_version));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), LabelingError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LabelingError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::{record, snapshot};

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_metric(0.0, 7, 3.0).unwrap(), 0.0);
        assert_eq!(normalize_metric(500.0, 1_000_000, 1000.0).unwrap(), 50.0);
        assert_eq!(normalize_metric(10_000.0, 10_000, 75.0).unwrap(), 75.0);
        assert!(matches!(normalize_metric(1.0, 0, 1.0), Err(LabelingError::Subscribers)));
        assert_eq!(normalize_metric(500.0f32, 1_000_000, 1000.0).unwrap(), 50.0f32);
    }

    fn with_final_score(id: &str, score: i64) -> PostRecord {
        let mut r = record(id, &[0.0, 10.0]);
        r.subreddit.subscribers = 100_000;
        r.snapshots[1] = snapshot(10.0, score);
        r
    }

    #[test]
    fn p99_cap_one_to_hundred() {
        let train: Vec<_> = (1..=100).map(|i| with_final_score(&format!("p{i:03}"), i)).collect();
        let caps = fit_p99_caps(&train).unwrap();
        assert!((caps.score - 99.01).abs() < 1e-9);
    }

    #[test]
    fn p99_cap_degenerate_and_single() {
        let same: Vec<_> = (0..5).map(|i| with_final_score(&format!("s{i}"), 42)).collect();
        assert!((fit_p99_caps(&same).unwrap().score - 42.0).abs() < 1e-9);
        assert!((fit_p99_caps(&same[..1]).unwrap().score - 42.0).abs() < 1e-9);
        assert!(matches!(fit_p99_caps(&[]), Err(LabelingError::EmptyTrain)));
    }

    #[test]
    fn preliminary_target_examples() {
        let caps = NormalizationCaps::unbounded();
        let train: Vec<_> = (0..100).map(|i| with_final_score(&format!("p{i:03}"), i * 3)).collect();
        let y = make_preliminary_target(&train, &caps, 0.05).unwrap();
        assert_eq!(y.iter().filter(|&&l| l).count(), 5);
        assert!(y[95..].iter().all(|&l| l));

        let ties: Vec<_> = (0..100).rev().map(|i| with_final_score(&format!("p{i:03}"), 7)).collect();
        let y = make_preliminary_target(&ties, &caps, 0.05).unwrap();
        let chosen: Vec<&str> = ties.iter().zip(&y).filter(|(_, &l)| l).map(|(r, _)| r.post_id.as_str()).collect();
        assert_eq!(chosen, ["p004", "p003", "p002", "p001", "p000"]);

        let two = [with_final_score("a", 1), with_final_score("b", 2)];
        assert_eq!(make_preliminary_target(&two, &caps, 0.5).unwrap(), [false, true]);
    }

    #[test]
    fn hybrid_score_examples() {
        let w = HybridWeights::<f64>::reference();
        let f: BTreeMap<String, f64> =
            [("norm_score", 100.0), ("norm_comments", 50.0), ("peak_velocity", 10.0)]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect();
        assert!((hybrid_score(&f, &w).unwrap() - 123.4).abs() < 1e-9);
        let zero: BTreeMap<String, f64> = f.keys().map(|k| (k.clone(), 0.0)).collect();
        assert_eq!(hybrid_score(&zero, &w).unwrap(), 0.0);
        let mut bad = f.clone();
        bad.remove("norm_score");
        assert!(matches!(hybrid_score(&bad, &w), Err(LabelingError::KeyMismatch { .. })));
    }

    #[test]
    fn kmeans_hand_example() {
        let t = fit_threshold(&[0.0, 0.0, 0.0, 1000.0, 1000.0]).unwrap();
        assert_eq!((t.low, t.high, t.tau), (0.0, 1000.0, 500.0));
        assert!(matches!(fit_threshold(&[3.0; 4]), Err(LabelingError::DegenerateScores)));
        let t32 = fit_threshold(&[0.0f32, 0.0, 0.0, 1000.0, 1000.0]).unwrap();
        assert_eq!(t32.tau, 500.0f32);
    }

    #[test]
    fn boundary_is_viral() {
        assert!(assign_label(300.27, 300.27));
        assert!(!assign_label(300.27 - 1e-9, 300.27));
    }
}
