//! Random forest of Gini classification trees.
//!
//! Bootstrap rows, `√d` candidate features per split, unlimited depth.
//! Rows are put into a canonical order before sampling, so a forest depends
//! on the multiset of training rows and the seed, not on row order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` means `⌊√d⌋` (at least 1).
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_features: None, min_samples_split: 2, max_depth: None, bootstrap: true, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForestNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { positive_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    pub nodes: Vec<ForestNode>,
}

impl ForestTree {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                ForestNode::Leaf { positive_fraction } => return *positive_fraction,
                ForestNode::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ForestTree>,
    /// Mean impurity decrease per feature, normalized to sum 1 (all zero when
    /// no tree ever split).
    pub importances: Vec<f64>,
}

impl ForestModel {
    pub fn predict_proba(&self, x: &DenseMatrix) -> Vec<f64> {
        x.rows()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / self.trees.len().max(1) as f64)
            .collect()
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a DenseMatrix,
    y: &'a [bool],
    mtry: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<ForestNode>,
    importance: Vec<f64>,
}

struct Work {
    node: usize,
    samples: Vec<(usize, f64)>,
    depth: usize,
}

impl TreeBuilder<'_> {
    fn leaf(samples: &[(usize, f64)], y: &[bool]) -> ForestNode {
        let total: f64 = samples.iter().map(|s| s.1).sum();
        let pos: f64 = samples.iter().filter(|s| y[s.0]).map(|s| s.1).sum();
        ForestNode::Leaf { positive_fraction: if total > 0.0 { pos / total } else { 0.0 } }
    }

    /// Best Gini split on feature `j`: `(decrease, threshold)`.
    fn split_on(&self, samples: &mut [(usize, f64)], j: usize, pos: f64, total: f64) -> Option<(f64, f64)> {
        samples.sort_by(|a, b| self.x.get(a.0, j).total_cmp(&self.x.get(b.0, j)));
        let parent = total * gini(pos, total);
        let mut best: Option<(f64, f64)> = None;
        let (mut lp, mut lt) = (0.0, 0.0);
        for k in 0..samples.len() - 1 {
            let (i, w) = samples[k];
            lt += w;
            if self.y[i] {
                lp += w;
            }
            let v = self.x.get(i, j);
            let next = self.x.get(samples[k + 1].0, j);
            if next <= v {
                continue;
            }
            let dec = parent - lt * gini(lp, lt) - (total - lt) * gini(pos - lp, total - lt);
            if best.is_none_or(|b| dec > b.0) {
                best = Some((dec, v));
            }
        }
        best
    }

    fn build(&mut self, root: Vec<(usize, f64)>, rng: &mut ChaCha8Rng) {
        let d = self.x.n_cols();
        self.nodes.push(ForestNode::Leaf { positive_fraction: 0.0 });
        let mut stack = vec![Work { node: 0, samples: root, depth: 0 }];
        let mut features: Vec<usize> = (0..d).collect();
        while let Some(Work { node, mut samples, depth }) = stack.pop() {
            let total: f64 = samples.iter().map(|s| s.1).sum();
            let pos: f64 = samples.iter().filter(|s| self.y[s.0]).map(|s| s.1).sum();
            let pure = pos == 0.0 || pos == total;
            let too_small = (total as usize) < self.cfg.min_samples_split || samples.len() < 2;
            let too_deep = self.cfg.max_depth.is_some_and(|m| depth >= m);
            if pure || too_small || too_deep {
                self.nodes[node] = Self::leaf(&samples, self.y);
                continue;
            }
            features.shuffle(rng);
            // draw further features past mtry only while no valid split exists
            let mut best: Option<(f64, usize, f64)> = None;
            for (rank, &j) in features.iter().enumerate() {
                if rank >= self.mtry && best.is_some() {
                    break;
                }
                if let Some((dec, thr)) = self.split_on(&mut samples, j, pos, total) {
                    if best.is_none_or(|b| dec > b.0) {
                        best = Some((dec, j, thr));
                    }
                }
            }
            let Some((dec, j, thr)) = best else {
                self.nodes[node] = Self::leaf(&samples, self.y);
                continue;
            };
            self.importance[j] += dec.max(0.0);
            let (left, right): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| self.x.get(s.0, j) <= thr);
            let l = self.nodes.len();
            self.nodes.push(ForestNode::Leaf { positive_fraction: 0.0 });
            self.nodes.push(ForestNode::Leaf { positive_fraction: 0.0 });
            self.nodes[node] = ForestNode::Split { feature: j, threshold: thr, left: l, right: l + 1 };
            stack.push(Work { node: l + 1, samples: right, depth: depth + 1 });
            stack.push(Work { node: l, samples: left, depth: depth + 1 });
        }
    }
}

fn canonical_order(x: &DenseMatrix, y: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.n_rows()).collect();
    idx.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].cmp(&y[b]))
    });
    idx
}

pub fn train_forest(x: &DenseMatrix, y: &[bool], cfg: &ForestConfig) -> Result<ForestModel, ModelError> {
    super::check_xy(x, y)?;
    if cfg.n_trees == 0 {
        return Err(ModelError::InvalidConfig("forest needs at least one tree".into()));
    }
    let d = x.n_cols();
    let mtry = cfg.max_features.unwrap_or(((d as f64).sqrt().floor() as usize).max(1)).clamp(1, d.max(1));
    let order = canonical_order(x, y);
    let n = order.len();
    let results: Vec<(ForestTree, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let mut counts = vec![0usize; n];
            if cfg.bootstrap {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            let samples: Vec<(usize, f64)> =
                (0..n).filter(|&k| counts[k] > 0).map(|k| (order[k], counts[k] as f64)).collect();
            let mut b = TreeBuilder { x, y, mtry, cfg, nodes: Vec::new(), importance: vec![0.0; d] };
            b.build(samples, &mut rng);
            let s: f64 = b.importance.iter().sum();
            if s > 0.0 {
                b.importance.iter_mut().for_each(|v| *v /= s);
            }
            (ForestTree { nodes: b.nodes }, b.importance)
        })
        .collect();
    let mut importances = vec![0.0; d];
    for (_, imp) in &results {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
    }
    let s: f64 = importances.iter().sum();
    if s > 0.0 {
        importances.iter_mut().for_each(|v| *v /= s);
    }
    Ok(ForestModel { trees: results.into_iter().map(|r| r.0).collect(), importances })
}
