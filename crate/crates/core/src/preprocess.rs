//! Fit-on-train tabular preprocessing.
//!
//! Numeric columns: median imputation (median of observed training values),
//! then standardization with the population mean and standard deviation of
//! the imputed training column. Categorical columns: a `missing` token joins
//! the observed training categories and each column is one-hot encoded;
//! categories unseen in training map to `missing`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::features::{Cell, ColumnKind, FeatureMatrix, Modality};
use crate::scalar::{mean_std, median};

/// Category token for absent and unseen values.
pub const MISSING_TOKEN: &str = "missing";

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot fit preprocessing on zero rows")]
    NoRows,
    #[error("column `{0}` was not seen during fitting")]
    UnknownColumn(String),
    #[error("fitted column `{0}` is absent from the matrix")]
    MissingColumn(String),
    #[error("column `{column}` row {row}: expected a {expected} value")]
    CellType { column: String, row: usize, expected: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnModel {
    Numeric { name: String, modality: Modality, median: f64, mean: f64, std: f64 },
    Categorical { name: String, modality: Modality, vocab: Vec<String> },
}

impl ColumnModel {
    pub fn name(&self) -> &str {
        match self {
            ColumnModel::Numeric { name, .. } | ColumnModel::Categorical { name, .. } => name,
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            ColumnModel::Numeric { modality, .. } | ColumnModel::Categorical { modality, .. } => *modality,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnModel::Numeric { .. } => 1,
            ColumnModel::Categorical { vocab, .. } => vocab.len(),
        }
    }
}

/// One column of the transformed numeric matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputColumn {
    pub name: String,
    /// Source feature; one-hot columns share their categorical's name.
    pub parent: String,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFingerprint {
    pub rows: usize,
    pub row_ids_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub columns: Vec<ColumnModel>,
    pub fitted_on: FitFingerprint,
}

/// Numeric matrix ready for the trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub x: DenseMatrix,
    pub columns: Vec<OutputColumn>,
}

impl Transformed {
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

fn fit_column(m: &FeatureMatrix, j: usize) -> Result<ColumnModel, PreprocessError> {
    let spec = &m.columns[j];
    match spec.kind {
        ColumnKind::Numeric => {
            let mut observed = Vec::with_capacity(m.n_rows());
            for (i, c) in m.column(j).enumerate() {
                match c {
                    Cell::Num(v) => observed.push(*v),
                    Cell::Missing => {}
                    Cell::Cat(_) => {
                        return Err(PreprocessError::CellType { column: spec.name.clone(), row: i, expected: "numeric" })
                    }
                }
            }
            let med = median(&observed).unwrap_or(0.0);
            let imputed: Vec<f64> = m.column(j).map(|c| c.as_num().unwrap_or(med)).collect();
            let lo = imputed.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = imputed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mean, std) = if lo == hi { (lo, 1.0) } else { mean_std(&imputed).expect("non-empty") };
            let std = if std > 0.0 { std } else { 1.0 };
            Ok(ColumnModel::Numeric { name: spec.name.clone(), modality: spec.modality, median: med, mean, std })
        }
        ColumnKind::Categorical => {
            let mut vocab = BTreeSet::from([MISSING_TOKEN.to_owned()]);
            for (i, c) in m.column(j).enumerate() {
                match c {
                    Cell::Cat(s) => {
                        vocab.insert(s.clone());
                    }
                    Cell::Missing => {}
                    Cell::Num(_) => {
                        return Err(PreprocessError::CellType {
                            column: spec.name.clone(),
                            row: i,
                            expected: "categorical",
                        })
                    }
                }
            }
            Ok(ColumnModel::Categorical {
                name: spec.name.clone(),
                modality: spec.modality,
                vocab: vocab.into_iter().collect(),
            })
        }
    }
}

impl PreprocessModel {
    pub fn fit(train: &FeatureMatrix) -> Result<Self, PreprocessError> {
        if train.n_rows() == 0 {
            return Err(PreprocessError::NoRows);
        }
        let columns = (0..train.n_cols()).map(|j| fit_column(train, j)).collect::<Result<Vec<_>, _>>()?;
        let mut h = Sha256::new();
        for id in &train.row_ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        Ok(Self {
            columns,
            fitted_on: FitFingerprint { rows: train.n_rows(), row_ids_sha256: hex::encode(h.finalize()) },
        })
    }

    pub fn output_columns(&self) -> Vec<OutputColumn> {
        let mut out = Vec::new();
        for c in &self.columns {
            match c {
                ColumnModel::Numeric { name, modality, .. } => {
                    out.push(OutputColumn { name: name.clone(), parent: name.clone(), modality: *modality })
                }
                ColumnModel::Categorical { name, modality, vocab } => out.extend(vocab.iter().map(|v| OutputColumn {
                    name: format!("{name}={v}"),
                    parent: name.clone(),
                    modality: *modality,
                })),
            }
        }
        out
    }

    /// Applies the fitted statistics; never changes the model.
    pub fn transform(&self, m: &FeatureMatrix) -> Result<Transformed, PreprocessError> {
        for c in &m.columns {
            if !self.columns.iter().any(|f| f.name() == c.name) {
                return Err(PreprocessError::UnknownColumn(c.name.clone()));
            }
        }
        let source: Vec<usize> = self
            .columns
            .iter()
            .map(|f| m.column_index(f.name()).ok_or_else(|| PreprocessError::MissingColumn(f.name().to_owned())))
            .collect::<Result<_, _>>()?;
        let width: usize = self.columns.iter().map(ColumnModel::width).sum();
        let rows: Vec<Vec<f64>> = m
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut out = Vec::with_capacity(width);
                for (f, &j) in self.columns.iter().zip(&source) {
                    match (f, &row[j]) {
                        (ColumnModel::Numeric { median, mean, std, .. }, cell) => {
                            let v = match cell {
                                Cell::Num(v) => *v,
                                Cell::Missing => *median,
                                Cell::Cat(_) => {
                                    return Err(PreprocessError::CellType {
                                        column: f.name().to_owned(),
                                        row: i,
                                        expected: "numeric",
                                    })
                                }
                            };
                            out.push((v - mean) / std);
                        }
                        (ColumnModel::Categorical { vocab, .. }, cell) => {
                            let token = match cell {
                                Cell::Cat(s) => s.as_str(),
                                Cell::Missing => MISSING_TOKEN,
                                Cell::Num(_) => {
                                    return Err(PreprocessError::CellType {
                                        column: f.name().to_owned(),
                                        row: i,
                                        expected: "categorical",
                                    })
                                }
                            };
                            let hit = vocab
                                .binary_search_by(|v| v.as_str().cmp(token))
                                .or_else(|_| vocab.binary_search_by(|v| v.as_str().cmp(MISSING_TOKEN)))
                                .expect("vocabulary contains the missing token");
                            out.extend((0..vocab.len()).map(|k| if k == hit { 1.0 } else { 0.0 }));
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_, _>>()?;
        let x = DenseMatrix::new(m.n_rows(), width, rows.concat()).expect("row width fixed by the model");
        Ok(Transformed { x, columns: self.output_columns() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preprocess model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnSpec;

    fn matrix(num: &[Option<f64>], cat: &[Option<&str>]) -> FeatureMatrix {
        let columns = vec![
            ColumnSpec { name: "a".into(), modality: Modality::Temporal, kind: ColumnKind::Numeric },
            ColumnSpec { name: "c".into(), modality: Modality::Visual, kind: ColumnKind::Categorical },
        ];
        let rows = num.iter().zip(cat).map(|(n, c)| vec![Cell::num(*n), Cell::cat(*c)]).collect();
        FeatureMatrix::new((0..num.len()).map(|i| format!("r{i}")).collect(), columns, rows).unwrap()
    }

    #[test]
    fn median_ignores_missing() {
        let m = matrix(&[Some(1.0), Some(2.0), None, Some(100.0)], &[Some("a"), Some("a"), None, Some("b")]);
        let p = PreprocessModel::fit(&m).unwrap();
        match &p.columns[0] {
            ColumnModel::Numeric { median, .. } => assert_eq!(*median, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vocab_adds_missing() {
        let m = matrix(&[Some(1.0), Some(2.0), Some(3.0)], &[Some("a"), Some("a"), None]);
        let p = PreprocessModel::fit(&m).unwrap();
        match &p.columns[1] {
            ColumnModel::Categorical { vocab, .. } => assert_eq!(vocab, &["a", "missing"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let m = matrix(&[Some(0.1), Some(0.1), Some(0.1)], &[Some("a"), Some("a"), Some("a")]);
        let p = PreprocessModel::fit(&m).unwrap();
        let t = p.transform(&m).unwrap();
        assert!(t.x.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unseen_category_goes_to_missing() {
        let train = matrix(&[Some(1.0), Some(2.0)], &[Some("a"), Some("b")]);
        let p = PreprocessModel::fit(&train).unwrap();
        let test = matrix(&[Some(5.0)], &[Some("z")]);
        let t = p.transform(&test).unwrap();
        assert_eq!(t.names(), ["a", "c=a", "c=b", "c=missing"]);
        assert_eq!(&t.x.row(0)[1..], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_column_is_rejected() {
        let train = matrix(&[Some(1.0)], &[Some("a")]);
        let p = PreprocessModel::fit(&train).unwrap();
        let mut other = train.clone();
        other.columns[0].name = "zzz".into();
        assert!(matches!(p.transform(&other), Err(PreprocessError::UnknownColumn(_))));
        assert!(matches!(PreprocessModel::fit(&train.select_rows(&[])), Err(PreprocessError::NoRows)));
    }
}
