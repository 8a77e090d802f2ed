use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
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
    #[error("manifest error on {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Shape(String),
}

/// Feature group used for ablation and importance accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Temporal,
    Network,
    Visual,
    Textual,
    Contextual,
}

impl Modality {
    pub const ALL: [Modality; 5] =
        [Modality::Temporal, Modality::Network, Modality::Visual, Modality::Textual, Modality::Contextual];

    /// Visual, textual and contextual: the precomputed content features.
    pub const STATIC: [Modality; 3] = [Modality::Visual, Modality::Textual, Modality::Contextual];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Temporal => "temporal",
            Modality::Network => "network",
            Modality::Visual => "visual",
            Modality::Textual => "textual",
            Modality::Contextual => "contextual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown modality '{s}'"))
    }
}

pub type ModalitySet = BTreeSet<Modality>;

pub fn all_modalities() -> ModalitySet {
    Modality::ALL.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub modality: Modality,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

impl Cell {
    pub fn num(v: Option<f64>) -> Self {
        match v {
            Some(x) if x.is_finite() => Cell::Num(x),
            _ => Cell::Missing,
        }
    }

    pub fn cat(v: Option<impl Into<String>>) -> Self {
        match v.map(Into::into) {
            Some(s) if !s.is_empty() => Cell::Cat(s),
            _ => Cell::Missing,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Window-scoped tabular features. Rows are posts; columns carry a
/// modality and a kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub columns: Vec<ColumnSpec>,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<String>, columns: Vec<ColumnSpec>, rows: Vec<Vec<Cell>>) -> Result<Self, MatrixError> {
        let m = Self { row_ids, columns, rows };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), MatrixError> {
        if self.rows.len() != self.row_ids.len() {
            return Err(MatrixError::Shape(format!(
                "{} row ids for {} rows",
                self.row_ids.len(),
                self.rows.len()
            )));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != self.columns.len()) {
            return Err(MatrixError::Shape(format!("row {i} is not {} wide", self.columns.len())));
        }
        let mut names = BTreeSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(MatrixError::Shape(format!("duplicate column '{}'", c.name)));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().map(move |r| &r[j])
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Keeps only columns whose modality is in `keep`.
    pub fn restrict(&self, keep: &ModalitySet) -> FeatureMatrix {
        let cols: Vec<usize> =
            (0..self.n_cols()).filter(|&j| keep.contains(&self.columns[j].modality)).collect();
        FeatureMatrix {
            row_ids: self.row_ids.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&j| r[j].clone()).collect()).collect(),
        }
    }

    pub fn manifest(&self) -> MatrixManifest {
        MatrixManifest { columns: self.columns.clone() }
    }

    /// Writes `<path>` as CSV (first column `post_id`, empty field = missing)
    /// and `<path>.manifest.json` describing each column.
    pub fn write(&self, path: &Path) -> Result<(), MatrixError> {
        let csv_err = |source| MatrixError::Csv { path: path.to_owned(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["post_id".to_owned()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|c| match c {
                Cell::Num(x) => x.to_string(),
                Cell::Cat(s) => s.clone(),
                Cell::Missing => String::new(),
            }));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|source| MatrixError::Io { path: path.to_owned(), source })?;

        let mpath = manifest_path(path);
        let file = File::create(&mpath).map_err(|source| MatrixError::Io { path: mpath.clone(), source })?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.manifest())
            .map_err(|source| MatrixError::Manifest { path: mpath, source })
    }

    pub fn read(path: &Path) -> Result<FeatureMatrix, MatrixError> {
        let mpath = manifest_path(path);
        let file = File::open(&mpath).map_err(|source| MatrixError::Io { path: mpath.clone(), source })?;
        let manifest: MatrixManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|source| MatrixError::Manifest { path: mpath, source })?;
        let csv_err = |source| MatrixError::Csv { path: path.to_owned(), source };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let expected = manifest.columns.len() + 1;
        if header.len() != expected
            || header.iter().skip(1).zip(&manifest.columns).any(|(h, c)| h != c.name)
        {
            return Err(MatrixError::Shape("csv header does not match manifest".into()));
        }
        let mut row_ids = Vec::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            row_ids.push(rec[0].to_owned());
            let mut row = Vec::with_capacity(manifest.columns.len());
            for (field, col) in rec.iter().skip(1).zip(&manifest.columns) {
                row.push(match (field.is_empty(), col.kind) {
                    (true, _) => Cell::Missing,
                    (false, ColumnKind::Categorical) => Cell::Cat(field.to_owned()),
                    (false, ColumnKind::Numeric) => Cell::Num(field.parse().map_err(|_| {
                        MatrixError::Shape(format!("column '{}': not a number: '{field}'", col.name))
                    })?),
                });
            }
            rows.push(row);
        }
        FeatureMatrix::new(row_ids, manifest.columns, rows)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
