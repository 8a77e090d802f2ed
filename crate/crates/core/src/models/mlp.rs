//! Feed-forward network with ReLU hidden layers and a logistic output,
//! trained by Adam on mini-batches with optional early stopping.
//!
//! Batch objective: `Σ sᵢ ℓᵢ / b + α / (2b) · Σ‖W‖²` where `b` is the batch
//! size, `sᵢ` the class weight of example `i` and biases are not penalized.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_weights, sigmoid, softplus, ClassWeighting, ModelError};
use crate::dense::DenseMatrix;

/// Gradient of one layer: weights and bias.
type LayerGrad = (Array2<f64>, Array1<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    /// L2 penalty.
    pub alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stopping: bool,
    pub validation_fraction: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub class_weight: ClassWeighting,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![100, 50],
            learning_rate: 1e-3,
            alpha: 1e-4,
            batch_size: 200,
            max_epochs: 500,
            early_stopping: true,
            validation_fraction: 0.1,
            tol: 1e-4,
            n_iter_no_change: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            class_weight: ClassWeighting::Balanced,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub epochs: usize,
    pub best_validation_loss: Option<f64>,
}

impl MlpModel {
    /// Fan-in scaled uniform initialisation `U(-√(6/fan_in), √(6/fan_in))`.
    pub fn init(n_inputs: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|p| {
                let bound = (6.0 / p[0].max(1) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((p[0], p[1]), |_| rng.random_range(-bound..=bound)),
                    bias: Array1::from_shape_fn(p[1], |_| rng.random_range(-bound..=bound)),
                }
            })
            .collect();
        Self { layers, epochs: 0, best_validation_loss: None }
    }

    /// Output-layer logits.
    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&l.weights) + &l.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let out = acts.pop().expect("output layer").column(0).to_owned();
        (acts, out)
    }

    pub fn predict_proba(&self, x: &DenseMatrix) -> Vec<f64> {
        let view = view(x);
        self.forward(view).1.iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter vector length");
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
            l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
    }

    /// Batch objective and its gradient in [`MlpModel::flat_params`] order.
    pub fn loss_and_gradient(&self, x: &DenseMatrix, y: &[bool], sample_weight: &[f64], alpha: f64) -> (f64, Vec<f64>) {
        let (loss, grads) = self.backprop(view(x), y, sample_weight, alpha);
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in &grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss, flat)
    }

    fn backprop(
        &self,
        x: ArrayView2<f64>,
        y: &[bool],
        s: &[f64],
        alpha: f64,
    ) -> (f64, Vec<LayerGrad>) {
        let b = x.nrows() as f64;
        let (acts, logits) = self.forward(x);
        let mut loss = 0.0;
        let mut delta = Array2::zeros((x.nrows(), 1));
        for (i, &z) in logits.iter().enumerate() {
            let yv = if y[i] { 1.0 } else { 0.0 };
            loss += s[i] * if y[i] { softplus(-z) } else { softplus(z) };
            delta[(i, 0)] = s[i] * (sigmoid(z) - yv) / b;
        }
        loss /= b;
        loss += alpha / (2.0 * b) * self.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum::<f64>();

        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let gw = acts[k].t().dot(&delta) + &(&l.weights * (alpha / b));
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&l.weights.t());
                next.zip_mut_with(&acts[k], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }

    fn weighted_log_loss(&self, x: ArrayView2<f64>, y: &[bool], s: &[f64]) -> f64 {
        let logits = self.forward(x).1;
        let total: f64 = logits
            .iter()
            .zip(y)
            .zip(s)
            .map(|((&z, &l), &w)| w * if l { softplus(-z) } else { softplus(z) })
            .sum();
        total / y.len() as f64
    }
}

fn view(x: &DenseMatrix) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((x.n_rows(), x.n_cols()), x.as_slice()).expect("dense matrix shape")
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &MlpConfig) {
        self.t += 1;
        let lr = cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt() / (1.0 - cfg.beta1.powi(self.t));
        for k in 0..params.len() {
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * grad[k];
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            params[k] -= lr * self.m[k] / (self.v[k].sqrt() + cfg.epsilon);
        }
    }
}

/// Seeded stratified hold-out: `(train, validation)` row indices. Each class
/// contributes `round(frac · n_c)` rows (at least one when it has two or more).
fn stratified_holdout(y: &[bool], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        let mut n_val = (frac * idx.len() as f64).round() as usize;
        if idx.len() >= 2 {
            n_val = n_val.clamp(1, idx.len() - 1);
        } else {
            n_val = 0;
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn train_mlp(x: &DenseMatrix, y: &[bool], cfg: &MlpConfig) -> Result<MlpModel, ModelError> {
    super::check_xy(x, y)?;
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 || cfg.alpha < 0.0 {
        return Err(ModelError::InvalidConfig("mlp batch size, learning rate and alpha".into()));
    }
    if cfg.early_stopping && !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(ModelError::InvalidConfig("mlp validation fraction must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init(x.n_cols(), &cfg.hidden_layers, &mut rng);
    let (w_neg, w_pos) = class_weights(y, cfg.class_weight);
    let s: Vec<f64> = y.iter().map(|&l| if l { w_pos } else { w_neg }).collect();

    let (mut train_idx, val_idx) = if cfg.early_stopping {
        stratified_holdout(y, cfg.validation_fraction, &mut rng)
    } else {
        ((0..y.len()).collect(), Vec::new())
    };
    let x_val = x.select_rows(&val_idx);
    let y_val: Vec<bool> = val_idx.iter().map(|&i| y[i]).collect();
    let s_val: Vec<f64> = val_idx.iter().map(|&i| s[i]).collect();

    let mut params = model.flat_params();
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stall = 0;
    let mut epochs = 0;
    for _ in 0..cfg.max_epochs {
        epochs += 1;
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let xb = x.select_rows(chunk);
            let yb: Vec<bool> = chunk.iter().map(|&i| y[i]).collect();
            let sb: Vec<f64> = chunk.iter().map(|&i| s[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xb, &yb, &sb, cfg.alpha);
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grad, cfg);
            model.set_flat_params(&params);
        }
        epoch_loss /= train_idx.len() as f64;
        let monitored = if val_idx.is_empty() { epoch_loss } else { model.weighted_log_loss(view(&x_val), &y_val, &s_val) };
        if !monitored.is_finite() {
            break;
        }
        if monitored < best - cfg.tol {
            stall = 0;
        } else {
            stall += 1;
        }
        if monitored < best {
            best = monitored;
            best_params.clone_from(&params);
        }
        if stall >= cfg.n_iter_no_change {
            break;
        }
    }
    if cfg.early_stopping {
        model.set_flat_params(&best_params);
        model.best_validation_loss = Some(best);
    }
    model.epochs = epochs;
    Ok(model)
}
