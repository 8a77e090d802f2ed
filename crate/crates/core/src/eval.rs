//! Ranking and threshold metrics, chronological splitting and stratified
//! cross-validation with fold-internal preprocessing.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::ingest::PostRecord;
use crate::models::{train, ModelConfig, ModelError};
use crate::preprocess::{PreprocessError, PreprocessModel};
use crate::scalar::{mean_std, Scalar};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("score at index {0} is NaN")]
    NanScore(usize),
    #[error("cross-validation needs k ≥ 2, got {0}")]
    FoldCount(usize),
    #[error("class {class} has {count} examples, fewer than k = {k}")]
    ClassTooSmall { class: bool, count: usize, k: usize },
    #[error("train fraction {0} outside (0, 1)")]
    TrainFraction(f64),
    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("no valid chronological boundary")]
    NoBoundary,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_inputs<T: Scalar>(y: &[bool], scores: &[T]) -> Result<(usize, usize), EvalError> {
    if y.len() != scores.len() {
        return Err(EvalError::LengthMismatch { labels: y.len(), scores: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NanScore(i));
    }
    let pos = y.iter().filter(|&&l| l).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, grouped into blocks of equal score.
fn descending_blocks<T: Scalar>(scores: &[T]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN rejected"));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match blocks.last_mut() {
            Some(b) if scores[b[0]] == scores[i] => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

/// Average precision: `Σ precision(t) · Δrecall(t)` over descending score
/// thresholds, equal scores crossing the threshold together.
pub fn pr_auc<T: Scalar>(y: &[bool], scores: &[T]) -> Result<f64, EvalError> {
    let (pos, _) = check_inputs(y, scores)?;
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    for block in descending_blocks(scores) {
        let bp = block.iter().filter(|&&i| y[i]).count();
        tp += bp;
        fp += block.len() - bp;
        if bp > 0 {
            ap += (tp as f64 / (tp + fp) as f64) * (bp as f64 / pos as f64);
        }
    }
    Ok(ap)
}

/// Mann–Whitney statistic `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` via average ranks.
pub fn roc_auc<T: Scalar>(y: &[bool], scores: &[T]) -> Result<f64, EvalError> {
    let (pos, neg) = check_inputs(y, scores)?;
    let mut blocks = descending_blocks(scores);
    blocks.reverse();
    let mut rank_sum = 0.0;
    let mut seen = 0usize;
    for block in blocks {
        let avg_rank = seen as f64 + (block.len() as f64 + 1.0) / 2.0;
        rank_sum += avg_rank * block.iter().filter(|&&i| y[i]).count() as f64;
        seen += block.len();
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// F1 of the rule `prob ≥ threshold`; 0 when nothing is predicted positive.
pub fn f1_at_threshold<T: Scalar>(y: &[bool], probs: &[T], threshold: T) -> Result<f64, EvalError> {
    if y.len() != probs.len() {
        return Err(EvalError::LengthMismatch { labels: y.len(), scores: probs.len() });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&l, &p) in y.iter().zip(probs) {
        match (p >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub f1: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn evaluate(y: &[bool], probs: &[f64], threshold: f64) -> Result<MetricReport, EvalError> {
    let (n_pos, n_neg) = check_inputs(y, probs)?;
    Ok(MetricReport {
        pr_auc: pr_auc(y, probs)?,
        roc_auc: roc_auc(y, probs)?,
        f1: f1_at_threshold(y, probs, threshold)?,
        n_pos,
        n_neg,
    })
}

/// Seeded stratified folds: each class is shuffled, then dealt round-robin,
/// the second class continuing where the first stopped. Per-fold class
/// counts differ by at most one.
pub fn stratified_kfold(y: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::FoldCount(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(EvalError::ClassTooSmall { class, count: idx.len(), k });
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Creation time of the earliest test record.
    pub boundary: DateTime<Utc>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Orders records by `(created_utc, post_id)` and puts the first
/// `⌊train_frac · n⌋` into train, moving the cut forward past records that
/// share the boundary timestamp.
pub fn chronological_split(records: &[PostRecord], train_frac: f64) -> Result<SplitAssignment, EvalError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EvalError::TrainFraction(train_frac));
    }
    let n = records.len();
    if n < 2 {
        return Err(EvalError::TooFewRecords(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a].created_utc.cmp(&records[b].created_utc).then_with(|| records[a].post_id.cmp(&records[b].post_id))
    });
    let mut cut = ((train_frac * n as f64).floor() as usize).clamp(1, n - 1);
    while cut < n && records[order[cut]].created_utc == records[order[cut - 1]].created_utc {
        cut += 1;
    }
    if cut == n {
        return Err(EvalError::NoBoundary);
    }
    let (train_indices, test_indices) = (order[..cut].to_vec(), order[cut..].to_vec());
    Ok(SplitAssignment {
        train_ids: train_indices.iter().map(|&i| records[i].post_id.clone()).collect(),
        test_ids: test_indices.iter().map(|&i| records[i].post_id.clone()).collect(),
        boundary: records[order[cut]].created_utc,
        train_indices,
        test_indices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub held_out: Vec<usize>,
    pub metrics: MetricReport,
    pub preprocess: PreprocessModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub pr_auc: MeanStd,
    pub roc_auc: MeanStd,
    pub f1: MeanStd,
}

fn summarize(values: impl Iterator<Item = f64>) -> MeanStd {
    let v: Vec<f64> = values.collect();
    let (mean, std) = mean_std(&v).unwrap_or((f64::NAN, f64::NAN));
    MeanStd { mean, std }
}

/// Stratified k-fold CV; preprocessing is re-fitted on each training part.
pub fn cross_validate(
    config: &ModelConfig,
    matrix: &FeatureMatrix,
    y: &[bool],
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<CvReport, EvalError> {
    if matrix.n_rows() != y.len() {
        return Err(EvalError::LengthMismatch { labels: y.len(), scores: matrix.n_rows() });
    }
    let folds = stratified_kfold(y, k, seed)?;
    let folds: Vec<CvFold> = folds
        .par_iter()
        .map(|held| {
            let mut in_held = vec![false; y.len()];
            held.iter().for_each(|&i| in_held[i] = true);
            let train_idx: Vec<usize> = (0..y.len()).filter(|&i| !in_held[i]).collect();
            let pre = PreprocessModel::fit(&matrix.select_rows(&train_idx))?;
            let tr = pre.transform(&matrix.select_rows(&train_idx))?;
            let te = pre.transform(&matrix.select_rows(held))?;
            let y_tr: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
            let y_te: Vec<bool> = held.iter().map(|&i| y[i]).collect();
            let model = train(config, &tr.x, &y_tr, &tr.names())?;
            let probs = model.predict_proba(&te.x)?;
            Ok(CvFold { held_out: held.clone(), metrics: evaluate(&y_te, &probs, threshold)?, preprocess: pre })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(CvReport {
        pr_auc: summarize(folds.iter().map(|f| f.metrics.pr_auc)),
        roc_auc: summarize(folds.iter().map(|f| f.metrics.roc_auc)),
        f1: summarize(folds.iter().map(|f| f.metrics.f1)),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed_rankings() {
        let y = [false, false, false, true];
        assert_eq!(pr_auc(&y, &[0.1, 0.2, 0.3, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&y, &[0.1, 0.2, 0.3, 0.9]).unwrap(), 1.0);
        assert!((pr_auc(&y, &[0.9, 0.8, 0.7, 0.1]).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(roc_auc(&y, &[0.5; 4]).unwrap(), 0.5);
        assert!(matches!(pr_auc(&[true, true], &[0.1, 0.2]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn f1_examples() {
        let y = [true, true, true, false, false];
        assert_eq!(f1_at_threshold(&y, &[0.9, 0.9, 0.9, 0.1, 0.1], 0.5).unwrap(), 1.0);
        assert_eq!(f1_at_threshold(&y, &[0.1; 5], 0.5).unwrap(), 0.0);
        let f = f1_at_threshold(&y, &[0.9, 0.9, 0.1, 0.9, 0.1], 0.5).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kfold_counts() {
        let y: Vec<bool> = (0..100).map(|i| i % 10 == 0).collect();
        let folds = stratified_kfold(&y, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(f.iter().filter(|&&i| y[i]).count(), 2);
            assert_eq!(f.len(), 20);
        }
        assert!(matches!(stratified_kfold(&y, 1, 3), Err(EvalError::FoldCount(1))));
    }
}
