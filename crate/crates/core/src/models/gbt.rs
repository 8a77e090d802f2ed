//! Gradient-boosted regression trees on the binary logistic loss.
//!
//! Exact greedy split search over pre-sorted feature columns, second-order
//! leaf values `-G / (H + λ)` scaled by the learning rate, and per-example
//! weights `scale_pos_weight` for positives and 1 for negatives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError};
use crate::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Minimum loss reduction to split.
    pub gamma: f64,
    /// `None` uses `#neg / #pos` of the training labels.
    pub scale_pos_weight: Option<f64>,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            scale_pos_weight: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GbtNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64, cover: f64 },
    Leaf { value: f64, cover: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtTree {
    pub nodes: Vec<GbtNode>,
}

impl GbtTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                GbtNode::Leaf { value, .. } => return *value,
                GbtNode::Split { feature, threshold, left, right, .. } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_margin: f64,
    pub trees: Vec<GbtTree>,
    pub n_features: usize,
    pub scale_pos_weight: f64,
}

/// Per-feature importance flavours accumulated over all splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtImportance {
    pub total_gain: Vec<f64>,
    pub total_cover: Vec<f64>,
    pub frequency: Vec<f64>,
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &DenseMatrix) -> Vec<f64> {
        x.rows().map(|r| sigmoid(self.margin(r))).collect()
    }

    pub fn importance(&self) -> GbtImportance {
        let mut imp = GbtImportance {
            total_gain: vec![0.0; self.n_features],
            total_cover: vec![0.0; self.n_features],
            frequency: vec![0.0; self.n_features],
        };
        for t in &self.trees {
            for n in &t.nodes {
                if let GbtNode::Split { feature, gain, cover, .. } = n {
                    imp.total_gain[*feature] += gain;
                    imp.total_cover[*feature] += cover;
                    imp.frequency[*feature] += 1.0;
                }
            }
        }
        imp
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Grower<'a> {
    x: &'a DenseMatrix,
    sorted: &'a [Vec<u32>],
    /// Column values in `sorted` order.
    values: &'a [Vec<f64>],
    cfg: &'a GbtConfig,
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

impl Grower<'_> {
    /// Grows one tree level by level. `node_of[i]` is the open node holding
    /// row `i`, or `usize::MAX` once the row sits in a finished leaf.
    fn grow(&self, grad: &[f64], hess: &[f64]) -> GbtTree {
        let n = self.x.n_rows();
        let lambda = self.cfg.lambda;
        let mut nodes: Vec<GbtNode> = Vec::new();
        let mut node_of = vec![0usize; n];
        // open nodes at the current level: (node index, G, H, gradients vary)
        let (g0, h0) = (grad.iter().sum::<f64>(), hess.iter().sum::<f64>());
        nodes.push(GbtNode::Leaf { value: 0.0, cover: h0 });
        let mut open = vec![(0usize, g0, h0)];
        for depth in 0..=self.cfg.max_depth {
            if open.is_empty() {
                break;
            }
            let mut slot_of_node = vec![usize::MAX; nodes.len()];
            for (s, &(k, _, _)) in open.iter().enumerate() {
                slot_of_node[k] = s;
            }
            let slot: Vec<usize> =
                node_of.iter().map(|&k| if k == usize::MAX { usize::MAX } else { slot_of_node[k] }).collect();
            let best: Vec<Option<Candidate>> = if depth == self.cfg.max_depth {
                vec![None; open.len()]
            } else {
                self.best_splits(grad, hess, &slot, &open)
            };
            let mut next = Vec::new();
            let mut children = vec![None; open.len()];
            for (s, &(k, g, h)) in open.iter().enumerate() {
                match best[s] {
                    Some(c) => {
                        let l = nodes.len();
                        nodes.push(GbtNode::Leaf { value: 0.0, cover: 0.0 });
                        nodes.push(GbtNode::Leaf { value: 0.0, cover: 0.0 });
                        nodes[k] = GbtNode::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left: l,
                            right: l + 1,
                            gain: c.gain,
                            cover: h,
                        };
                        children[s] = Some((l, c));
                    }
                    None => {
                        nodes[k] = GbtNode::Leaf {
                            value: self.cfg.learning_rate * leaf_weight(g, h, lambda),
                            cover: h,
                        };
                    }
                }
            }
            let mut sums = vec![(0.0, 0.0, 0.0, 0.0); open.len()];
            for i in 0..n {
                let s = slot[i];
                if s == usize::MAX {
                    continue;
                }
                match children[s] {
                    Some((l, c)) => {
                        if self.x.get(i, c.feature) <= c.threshold {
                            node_of[i] = l;
                            sums[s].0 += grad[i];
                            sums[s].1 += hess[i];
                        } else {
                            node_of[i] = l + 1;
                            sums[s].2 += grad[i];
                            sums[s].3 += hess[i];
                        }
                    }
                    None => node_of[i] = usize::MAX,
                }
            }
            for (s, child) in children.iter().enumerate() {
                if let Some((l, _)) = child {
                    let (gl, hl, gr, hr) = sums[s];
                    nodes[*l] = GbtNode::Leaf { value: 0.0, cover: hl };
                    nodes[l + 1] = GbtNode::Leaf { value: 0.0, cover: hr };
                    next.push((*l, gl, hl));
                    next.push((l + 1, gr, hr));
                }
            }
            open = next;
        }
        GbtTree { nodes }
    }

    fn best_splits(
        &self,
        grad: &[f64],
        hess: &[f64],
        slot: &[usize],
        open: &[(usize, f64, f64)],
    ) -> Vec<Option<Candidate>> {
        let lambda = self.cfg.lambda;
        let mcw = self.cfg.min_child_weight;
        let m = open.len();
        // a node whose gradients are all equal cannot gain from a split
        let mut g_min = vec![f64::INFINITY; m];
        let mut g_max = vec![f64::NEG_INFINITY; m];
        for (i, &s) in slot.iter().enumerate() {
            if s != usize::MAX {
                let r = grad[i] / hess[i].max(f64::MIN_POSITIVE);
                g_min[s] = g_min[s].min(r);
                g_max[s] = g_max[s].max(r);
            }
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.x.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut gl = vec![0.0; m];
                let mut hl = vec![0.0; m];
                let mut last: Vec<Option<f64>> = vec![None; m];
                let mut best: Vec<Option<Candidate>> = vec![None; m];
                for (&i, &v) in self.sorted[j].iter().zip(&self.values[j]) {
                    let i = i as usize;
                    let s = slot[i];
                    if s == usize::MAX {
                        continue;
                    }
                    if let Some(prev) = last[s] {
                        if v > prev {
                            let (_, g, h) = open[s];
                            let (gr, hr) = (g - gl[s], h - hl[s]);
                            if hl[s] >= mcw && hr >= mcw {
                                let gain = 0.5
                                    * (score(gl[s], hl[s], lambda) + score(gr, hr, lambda)
                                        - score(g, h, lambda));
                                if best[s].is_none_or(|b| gain > b.gain) {
                                    best[s] = Some(Candidate { gain, feature: j, threshold: prev });
                                }
                            }
                        }
                    }
                    gl[s] += grad[i];
                    hl[s] += hess[i];
                    last[s] = Some(v);
                }
                best
            })
            .collect();
        (0..m)
            .map(|s| {
                let best = per_feature
                    .iter()
                    .filter_map(|f| f[s])
                    .fold(None::<Candidate>, |acc, c| match acc {
                        Some(a) if a.gain >= c.gain => Some(a),
                        _ => Some(c),
                    })?;
                let impure = g_max[s] > g_min[s];
                let tol = 1e-12 * (1.0 + open[s].1.abs());
                let accept = best.gain > self.cfg.gamma + tol || (impure && best.gain >= self.cfg.gamma - tol);
                accept.then_some(best)
            })
            .collect()
    }
}

pub fn train_gbt(x: &DenseMatrix, y: &[bool], cfg: &GbtConfig) -> Result<GbtModel, ModelError> {
    super::check_xy(x, y)?;
    if cfg.learning_rate <= 0.0 || cfg.lambda < 0.0 || cfg.min_child_weight < 0.0 {
        return Err(ModelError::InvalidConfig("gbt learning rate, lambda and min_child_weight".into()));
    }
    let n_pos = y.iter().filter(|&&l| l).count() as f64;
    let n_neg = y.len() as f64 - n_pos;
    let spw = cfg.scale_pos_weight.unwrap_or(n_neg / n_pos);
    let w: Vec<f64> = y.iter().map(|&l| if l { spw } else { 1.0 }).collect();
    let wsum: f64 = w.iter().sum();
    let rate = (w.iter().zip(y).filter(|(_, &l)| l).map(|(w, _)| w).sum::<f64>() / wsum).clamp(1e-6, 1.0 - 1e-6);
    let base_margin = (rate / (1.0 - rate)).ln();

    let sorted: Vec<Vec<u32>> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)));
            idx
        })
        .collect();
    let values: Vec<Vec<f64>> =
        sorted.iter().enumerate().map(|(j, idx)| idx.iter().map(|&i| x.get(i as usize, j)).collect()).collect();
    let grower = Grower { x, sorted: &sorted, values: &values, cfg };

    let mut margin = vec![base_margin; x.n_rows()];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let mut grad = vec![0.0; x.n_rows()];
    let mut hess = vec![0.0; x.n_rows()];
    for _ in 0..cfg.n_rounds {
        for i in 0..x.n_rows() {
            let p = sigmoid(margin[i]);
            let yv = if y[i] { 1.0 } else { 0.0 };
            grad[i] = w[i] * (p - yv);
            hess[i] = (w[i] * p * (1.0 - p)).max(1e-16);
        }
        let tree = grower.grow(&grad, &hess);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel { base_margin, trees, n_features: x.n_cols(), scale_pos_weight: spw })
}
