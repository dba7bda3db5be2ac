//! Patient feature tables: CSV ingestion, dummy encoding, iterative
//! imputation, Spearman redundancy filtering and Lasso selection.

mod encode;
mod impute;
mod lasso;
mod spearman;

pub use encode::{encode_dummies, MAX_CATEGORIES};
pub use impute::{iterative_impute, mean_impute, ImputeParams};
pub use lasso::{
    default_lambda_grid, lasso_coordinate_descent, lasso_objective, lasso_select, LassoFit,
    LassoPath, LassoSettings,
};
pub use spearman::{spearman_filter, spearman_rho, DroppedPair};

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clinical CSV columns treated as categorical. `Age` is the only
/// continuous clinical covariate.
pub const CLINICAL_CATEGORICAL: [&str; 12] = [
    "CenterID",
    "Gender",
    "T",
    "N",
    "M",
    "TNMgroup",
    "TNMedition",
    "Tobacco",
    "Alcohol",
    "Performance",
    "HPV",
    "Chemotherapy",
];
pub const ID_COLUMN: &str = "PatientID";
pub const TIME_COLUMN: &str = "PFS_days";
pub const EVENT_COLUMN: &str = "Progression";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Continuous(_) => ColumnKind::Continuous,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Continuous(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    fn select_rows(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Continuous(v) => ColumnData::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Continuous(values),
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(values),
        }
    }

    /// Numeric values; `None` for categorical columns.
    pub fn numeric(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Continuous(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }
}

/// Rectangular patients x features table with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<String>,
    columns: Vec<Column>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidParameter(format!("duplicate row id {dup}")));
        }
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate column {}", c.name)));
            }
            if c.data.len() != ids.len() {
                return Err(Error::ShapeMismatch(format!(
                    "column {} has {} rows, table has {}",
                    c.name,
                    c.data.len(),
                    ids.len()
                )));
            }
        }
        Ok(Self { ids, columns })
    }

    pub fn from_matrix(ids: Vec<String>, names: Vec<String>, x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != ids.len() || x.ncols() != names.len() {
            return Err(Error::ShapeMismatch(format!(
                "matrix {}x{} vs {} ids and {} names",
                x.nrows(),
                x.ncols(),
                ids.len(),
                names.len()
            )));
        }
        let columns = names
            .into_iter()
            .enumerate()
            .map(|(j, n)| Column::continuous(n, x.column(j).iter().map(|&v| Some(v)).collect()))
            .collect();
        Self::new(ids, columns)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| (0..self.n_rows()).filter(|&r| c.data.is_missing(r)).count())
            .sum()
    }

    /// Dense numeric matrix; fails on categorical columns or missing cells.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(self.n_rows(), self.n_cols());
        for (j, c) in self.columns.iter().enumerate() {
            let vals = c.numeric().ok_or_else(|| {
                Error::InvalidParameter(format!("column {} is categorical", c.name))
            })?;
            for (i, v) in vals.iter().enumerate() {
                x[(i, j)] = v.ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "missing value in column {} row {}",
                        c.name, self.ids[i]
                    ))
                })?;
            }
        }
        Ok(x)
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown column {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.ids.clone(), columns)
    }

    pub fn select_rows(&self, ids: &[String]) -> Result<Self> {
        let pos: BTreeMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown row id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: c.data.select_rows(&rows),
            })
            .collect();
        Self::new(ids.to_vec(), columns)
    }

    /// Columns of `other` appended for the rows both tables share, keeping
    /// this table's row order.
    pub fn inner_join(&self, other: &FeatureTable) -> Result<Self> {
        let theirs: HashSet<&str> = other.ids.iter().map(String::as_str).collect();
        let shared: Vec<String> = self
            .ids
            .iter()
            .filter(|id| theirs.contains(id.as_str()))
            .cloned()
            .collect();
        let left = self.select_rows(&shared)?;
        let right = other.select_rows(&shared)?;
        let mut columns = left.columns;
        columns.extend(right.columns);
        Self::new(shared, columns)
    }

    /// Reads a CSV whose `id_column` identifies rows. Columns listed in
    /// `categorical` are kept as strings; all others must parse as numbers.
    /// Empty cells are missing. Columns in `skip` are ignored.
    pub fn read_csv(path: &Path, id_column: &str, categorical: &[&str], skip: &[&str]) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let id_pos = headers.iter().position(|h| h == id_column).ok_or_else(|| {
            Error::Config(format!("{} lacks the {id_column} column", path.display()))
        })?;
        let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        let ids: Vec<String> = records.iter().map(|r| r[id_pos].trim().to_owned()).collect();
        let mut columns = Vec::new();
        for (j, name) in headers.iter().enumerate() {
            if j == id_pos || skip.contains(&name) {
                continue;
            }
            let cells = records.iter().map(|r| r.get(j).unwrap_or("").trim());
            if categorical.contains(&name) {
                columns.push(Column::categorical(
                    name,
                    cells.map(|c| (!c.is_empty()).then(|| c.to_owned())).collect(),
                ));
            } else {
                let vals = cells
                    .enumerate()
                    .map(|(i, c)| {
                        if c.is_empty() {
                            Ok(None)
                        } else {
                            c.parse::<f64>().map(Some).map_err(|_| {
                                Error::Config(format!(
                                    "{}: column {name} row {} has non-numeric value {c:?}",
                                    path.display(),
                                    ids[i]
                                ))
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                columns.push(Column::continuous(name, vals));
            }
        }
        Self::new(ids, columns)
    }

    pub fn write_csv(&self, path: &Path, id_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![id_column.to_owned()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            for c in &self.columns {
                rec.push(match &c.data {
                    ColumnData::Continuous(v) => v[i].map(|x| x.to_string()).unwrap_or_default(),
                    ColumnData::Categorical(v) => v[i].clone().unwrap_or_default(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Clinical covariates plus the survival outcome columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalData {
    pub table: FeatureTable,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
}

impl ClinicalData {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let raw = FeatureTable::read_csv(path, ID_COLUMN, &CLINICAL_CATEGORICAL, &[])?;
        let outcome = |name: &str| -> Result<Vec<f64>> {
            let col = raw
                .column(name)
                .and_then(Column::numeric)
                .ok_or_else(|| Error::Config(format!("{} lacks numeric {name}", path.display())))?;
            col.iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| {
                        Error::Config(format!("missing {name} for patient {}", raw.ids()[i]))
                    })
                })
                .collect()
        };
        let time = outcome(TIME_COLUMN)?;
        let event_raw = outcome(EVENT_COLUMN)?;
        let event = event_raw
            .iter()
            .enumerate()
            .map(|(i, &e)| match e {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::Config(format!(
                    "{EVENT_COLUMN} must be 0/1, got {other} for patient {}",
                    raw.ids()[i]
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let keep: Vec<String> = raw
            .column_names()
            .into_iter()
            .filter(|n| n != TIME_COLUMN && n != EVENT_COLUMN)
            .collect();
        Ok(Self {
            table: raw.select_columns(&keep)?,
            time,
            event,
        })
    }
}

/// Outcome of correlation filtering and Lasso selection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kept: Vec<String>,
    pub dropped_by_correlation: Vec<DroppedPair>,
    pub dropped_by_lasso: Vec<String>,
    pub dropped_zero_variance: Vec<String>,
    pub lasso: Option<LassoPath>,
    pub count_before: usize,
    pub count_after: usize,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
