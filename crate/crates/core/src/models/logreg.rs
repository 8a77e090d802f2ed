//! L2-regularized logistic regression with per-class weights, fitted by
//! damped Newton iterations.
//!
//! Minimizes `C · Σ sᵢ ℓᵢ(w, b) + ½‖w‖²` where `sᵢ` is the class weight of
//! example `i` and `ℓᵢ` the log loss. The intercept is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{class_weights, sigmoid, softplus, ClassWeighting, ModelError};
use crate::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub class_weight: ClassWeighting,
    /// Stop once the gradient norm falls below this fraction of its
    /// starting value.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { c: 1.0, class_weight: ClassWeighting::Balanced, tol: 1e-6, max_iter: 10_000, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LogRegModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &DenseMatrix) -> Vec<f64> {
        x.rows().map(|r| sigmoid(self.decision(r))).collect()
    }
}

struct Problem<'a> {
    /// Design matrix with a trailing column of ones.
    xa: DMatrix<f64>,
    y: &'a [bool],
    s: Vec<f64>,
    c: f64,
    d: usize,
}

impl<'a> Problem<'a> {
    fn new(x: &DenseMatrix, y: &'a [bool], s: Vec<f64>, c: f64) -> Self {
        let (n, d) = (x.n_rows(), x.n_cols());
        let xa = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x.get(i, j) } else { 1.0 });
        Self { xa, y, s, c, d }
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let z = &self.xa * theta;
        let loss: f64 = z
            .iter()
            .zip(self.y)
            .zip(&self.s)
            .map(|((&z, &y), &s)| s * softplus(if y { -z } else { z }))
            .sum();
        self.c * loss + 0.5 * theta.rows(0, self.d).norm_squared()
    }

    fn grad_hess(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.d;
        let z = &self.xa * theta;
        let mut r = DVector::zeros(z.len());
        let mut scaled = self.xa.clone();
        for i in 0..z.len() {
            let pr = sigmoid(z[i]);
            let yv = if self.y[i] { 1.0 } else { 0.0 };
            r[i] = self.c * self.s[i] * (pr - yv);
            scaled.row_mut(i).scale_mut((self.c * self.s[i] * pr * (1.0 - pr)).sqrt());
        }
        let mut g = self.xa.tr_mul(&r);
        let mut h = scaled.tr_mul(&scaled);
        for j in 0..d {
            g[j] += theta[j];
            h[(j, j)] += 1.0;
        }
        (g, h)
    }
}

/// Newton direction; adds a growing ridge when the Hessian is numerically
/// indefinite.
fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = 1.0 + h.diagonal().amax();
    let mut mu = 0.0;
    loop {
        let mut hm = h.clone();
        for j in 0..hm.nrows() {
            hm[(j, j)] += mu;
        }
        if let Some(ch) = hm.cholesky() {
            return ch.solve(&(-g));
        }
        mu = if mu == 0.0 { 1e-12 * scale } else { mu * 10.0 };
    }
}

pub fn train_logreg(x: &DenseMatrix, y: &[bool], cfg: &LogRegConfig) -> Result<LogRegModel, ModelError> {
    super::check_xy(x, y)?;
    if cfg.c.is_nan() || cfg.c <= 0.0 {
        return Err(ModelError::InvalidConfig("logreg C must be positive".into()));
    }
    let (w_neg, w_pos) = class_weights(y, cfg.class_weight);
    let s = y.iter().map(|&l| if l { w_pos } else { w_neg }).collect();
    let prob = Problem::new(x, y, s, cfg.c);
    let d = x.n_cols();
    let mut theta = DVector::zeros(d + 1);
    let mut f = prob.objective(&theta);
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut grad_scale = None;
    while iterations < cfg.max_iter {
        let (g, h) = prob.grad_hess(&theta);
        grad_norm = g.norm();
        let g0 = *grad_scale.get_or_insert(grad_norm.max(1.0));
        if grad_norm < cfg.tol * g0 {
            break;
        }
        let step = newton_step(&h, &g);
        let slope = g.dot(&step);
        // Half the Newton decrement estimates the remaining objective gap.
        if -0.5 * slope <= 1e-13 * f.abs().max(1.0) {
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &theta + t * &step;
            let fc = prob.objective(&cand);
            if fc < f && fc <= f + 1e-4 * t * slope {
                theta = cand;
                f = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(LogRegModel {
        coef: theta.rows(0, d).iter().copied().collect(),
        intercept: theta[d],
        iterations,
        grad_norm,
    })
}
