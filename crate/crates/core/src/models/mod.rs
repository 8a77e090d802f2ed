//! Classifier families behind one train / predict / importance interface.

mod forest;
mod gbt;
mod logreg;
pub mod mlp;

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{train_forest, ForestConfig, ForestModel, ForestNode, ForestTree};
pub use gbt::{train_gbt, GbtConfig, GbtImportance, GbtModel, GbtNode, GbtTree};
pub use logreg::{train_logreg, LogRegConfig, LogRegModel};
pub use mlp::{train_mlp, MlpConfig, MlpModel};

use crate::dense::DenseMatrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training rows")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("expected {expected} feature columns, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("feature column {index} is `{actual}`, model was trained on `{expected}`")]
    ColumnMismatch { index: usize, expected: String, actual: String },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    None,
    /// `w_c = n / (2 n_c)`.
    #[default]
    Balanced,
}

/// `(w_negative, w_positive)` for binary labels with both classes present.
pub fn class_weights(y: &[bool], scheme: ClassWeighting) -> (f64, f64) {
    match scheme {
        ClassWeighting::None => (1.0, 1.0),
        ClassWeighting::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&l| l).count() as f64;
            (n / (2.0 * (n - pos)), n / (2.0 * pos))
        }
    }
}

/// Logistic function without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn check_xy(x: &DenseMatrix, y: &[bool]) -> Result<(), ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::LengthMismatch { rows: x.n_rows(), labels: y.len() });
    }
    if y.is_empty() {
        return Err(ModelError::Empty);
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(ModelError::SingleClass);
    }
    check_finite(x)
}

fn check_finite(x: &DenseMatrix) -> Result<(), ModelError> {
    match x.as_slice().iter().position(|v| !v.is_finite()) {
        Some(k) => Err(ModelError::NonFinite { row: k / x.n_cols().max(1), col: k % x.n_cols().max(1) }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    Gbt,
    Mlp,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Logreg, ModelKind::Gbt, ModelKind::Mlp, ModelKind::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Gbt => "gbt",
            ModelKind::Mlp => "mlp",
            ModelKind::RandomForest => "random_forest",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "rf" && *k == ModelKind::RandomForest))
            .ok_or_else(|| ModelError::UnknownKind(s.to_owned()))
    }
}

/// Hyperparameters for one classifier, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Logreg(LogRegConfig),
    Gbt(GbtConfig),
    Mlp(MlpConfig),
    RandomForest(ForestConfig),
}

impl ModelConfig {
    /// Default hyperparameters for `kind` with the given seed.
    pub fn preset(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Logreg => ModelConfig::Logreg(LogRegConfig { seed, ..LogRegConfig::default() }),
            ModelKind::Gbt => ModelConfig::Gbt(GbtConfig { seed, ..GbtConfig::default() }),
            ModelKind::Mlp => ModelConfig::Mlp(MlpConfig { seed, ..MlpConfig::default() }),
            ModelKind::RandomForest => ModelConfig::RandomForest(ForestConfig { seed, ..ForestConfig::default() }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Logreg(_) => ModelKind::Logreg,
            ModelConfig::Gbt(_) => ModelKind::Gbt,
            ModelConfig::Mlp(_) => ModelKind::Mlp,
            ModelConfig::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelConfig::Logreg(c) => c.seed,
            ModelConfig::Gbt(c) => c.seed,
            ModelConfig::Mlp(c) => c.seed,
            ModelConfig::RandomForest(c) => c.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelConfig::Logreg(c) => c.seed = seed,
            ModelConfig::Gbt(c) => c.seed = seed,
            ModelConfig::Mlp(c) => c.seed = seed,
            ModelConfig::RandomForest(c) => c.seed = seed,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Logreg(LogRegModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
    RandomForest(ForestModel),
}

/// Which GBT importance flavour feeds [`TrainedModel::importances`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceType {
    #[default]
    Gain,
    Cover,
    Frequency,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub feature_names: Vec<String>,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    /// Per-feature importances aligned to `feature_names`: total gain for
    /// gbt, mean impurity decrease for the forest, `|coefficient|` for
    /// logreg, none for the mlp.
    pub fn importances(&self) -> Option<Vec<f64>> {
        self.importances_of(ImportanceType::Gain)
    }

    pub fn importances_of(&self, flavour: ImportanceType) -> Option<Vec<f64>> {
        match &self.params {
            ModelParams::Logreg(m) => Some(m.coef.iter().map(|c| c.abs()).collect()),
            ModelParams::Gbt(m) => {
                let imp = m.importance();
                Some(match flavour {
                    ImportanceType::Gain => imp.total_gain,
                    ImportanceType::Cover => imp.total_cover,
                    ImportanceType::Frequency => imp.frequency,
                })
            }
            ModelParams::RandomForest(m) => Some(m.importances.clone()),
            ModelParams::Mlp(_) => None,
        }
    }

    /// Positive-class probabilities; `x` must have the training column count.
    pub fn predict_proba(&self, x: &DenseMatrix) -> Result<Vec<f64>, ModelError> {
        if x.n_cols() != self.feature_names.len() {
            return Err(ModelError::ShapeMismatch { expected: self.feature_names.len(), actual: x.n_cols() });
        }
        Ok(match &self.params {
            ModelParams::Logreg(m) => m.predict_proba(x),
            ModelParams::Gbt(m) => m.predict_proba(x),
            ModelParams::Mlp(m) => m.predict_proba(x),
            ModelParams::RandomForest(m) => m.predict_proba(x),
        })
    }

    /// Like [`TrainedModel::predict_proba`], also checking column names.
    pub fn predict_named(&self, x: &DenseMatrix, names: &[String]) -> Result<Vec<f64>, ModelError> {
        if names.len() != self.feature_names.len() {
            return Err(ModelError::ShapeMismatch { expected: self.feature_names.len(), actual: names.len() });
        }
        if let Some(index) = names.iter().zip(&self.feature_names).position(|(a, b)| a != b) {
            return Err(ModelError::ColumnMismatch {
                index,
                expected: self.feature_names[index].clone(),
                actual: names[index].clone(),
            });
        }
        self.predict_proba(x)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version(m.format_version));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Trains the classifier described by `config`.
pub fn train(
    config: &ModelConfig,
    x: &DenseMatrix,
    y: &[bool],
    feature_names: &[String],
) -> Result<TrainedModel, ModelError> {
    if feature_names.len() != x.n_cols() {
        return Err(ModelError::ShapeMismatch { expected: x.n_cols(), actual: feature_names.len() });
    }
    let params = match config {
        ModelConfig::Logreg(c) => ModelParams::Logreg(train_logreg(x, y, c)?),
        ModelConfig::Gbt(c) => ModelParams::Gbt(train_gbt(x, y, c)?),
        ModelConfig::Mlp(c) => ModelParams::Mlp(train_mlp(x, y, c)?),
        ModelConfig::RandomForest(c) => ModelParams::RandomForest(train_forest(x, y, c)?),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        feature_names: feature_names.to_vec(),
        params,
    })
}

#[cfg(test)]
mod tests;
