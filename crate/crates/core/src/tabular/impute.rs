use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Column, ColumnData, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeParams {
    pub rounds: usize,
    pub ridge: f64,
}

impl Default for ImputeParams {
    fn default() -> Self {
        Self {
            rounds: 10,
            ridge: 1e-3,
        }
    }
}

impl ImputeParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("imputation rounds must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

fn numeric_columns(table: &FeatureTable) -> Result<Vec<Vec<Option<f64>>>> {
    table
        .columns()
        .iter()
        .map(|c| match &c.data {
            ColumnData::Continuous(v) => {
                if v.iter().all(Option::is_none) {
                    Err(Error::InvalidParameter(format!("column {} has no observed values", c.name)))
                } else {
                    Ok(v.clone())
                }
            }
            ColumnData::Categorical(_) => Err(Error::InvalidParameter(format!(
                "column {} is categorical; encode it first",
                c.name
            ))),
        })
        .collect()
}

fn observed_mean(v: &[Option<f64>]) -> f64 {
    let obs: Vec<f64> = v.iter().flatten().copied().collect();
    obs.iter().sum::<f64>() / obs.len() as f64
}

fn rebuild(table: &FeatureTable, cols: Vec<Vec<f64>>) -> Result<FeatureTable> {
    let columns = table
        .columns()
        .iter()
        .zip(cols)
        .map(|(c, v)| Column::continuous(c.name.clone(), v.into_iter().map(Some).collect()))
        .collect();
    FeatureTable::new(table.ids().to_vec(), columns)
}

/// Column-mean imputation; the baseline the iterative imputer is compared to.
pub fn mean_impute(table: &FeatureTable) -> Result<FeatureTable> {
    let cols = numeric_columns(table)?;
    let filled = cols
        .iter()
        .map(|v| {
            let m = observed_mean(v);
            v.iter().map(|x| x.unwrap_or(m)).collect()
        })
        .collect();
    rebuild(table, filled)
}

/// Round-robin regression imputation producing one completed table.
///
/// Missing cells start at their column mean. Each round visits every
/// column with missing cells in table order, fits a ridge regression on the
/// other columns over the rows where that column is observed, and overwrites
/// its missing cells with the predictions. Predictors are standardised on the
/// training rows so the ridge penalty is scale free; the intercept is not
/// penalised. Observed cells are never touched.
pub fn iterative_impute(table: &FeatureTable, params: ImputeParams) -> Result<FeatureTable> {
    params.validate()?;
    let cols = numeric_columns(table)?;
    let n = table.n_rows();
    let p = cols.len();
    let mut x: Vec<Vec<f64>> = cols
        .iter()
        .map(|v| {
            let m = observed_mean(v);
            v.iter().map(|c| c.unwrap_or(m)).collect()
        })
        .collect();

    let targets: Vec<usize> = (0..p).filter(|&j| cols[j].iter().any(Option::is_none)).collect();
    if targets.is_empty() || p < 2 {
        return rebuild(table, x);
    }

    for round in 0..params.rounds {
        for &j in &targets {
            let observed: Vec<usize> = (0..n).filter(|&i| cols[j][i].is_some()).collect();
            let missing: Vec<usize> = (0..n).filter(|&i| cols[j][i].is_none()).collect();
            if observed.len() < 2 {
                if round == 0 {
                    log::warn!(
                        "column {} has {} observed rows; keeping mean imputation",
                        table.columns()[j].name,
                        observed.len()
                    );
                }
                continue;
            }
            let preds = fit_predict(&x, j, &observed, &missing, params.ridge);
            for (&i, v) in missing.iter().zip(preds) {
                x[j][i] = v;
            }
        }
    }
    rebuild(table, x)
}

fn fit_predict(x: &[Vec<f64>], target: usize, train: &[usize], test: &[usize], ridge: f64) -> Vec<f64> {
    // Standardise predictors over the training rows; drop constant ones.
    let mut preds = Vec::new();
    for (k, col) in x.iter().enumerate() {
        if k == target {
            continue;
        }
        let m = train.iter().map(|&i| col[i]).sum::<f64>() / train.len() as f64;
        let var = train.iter().map(|&i| (col[i] - m).powi(2)).sum::<f64>() / train.len() as f64;
        if var > 1e-24 * m.abs().max(1.0) {
            preds.push((k, m, var.sqrt()));
        }
    }
    let y_mean = train.iter().map(|&i| x[target][i]).sum::<f64>() / train.len() as f64;
    if preds.is_empty() {
        return vec![y_mean; test.len()];
    }

    let design = |rows: &[usize]| {
        DMatrix::from_fn(rows.len(), preds.len(), |r, c| {
            let (k, m, s) = preds[c];
            (x[k][rows[r]] - m) / s
        })
    };
    let a = design(train);
    let y = DVector::from_iterator(train.len(), train.iter().map(|&i| x[target][i] - y_mean));
    let mut gram = a.transpose() * &a;
    for d in 0..preds.len() {
        gram[(d, d)] += ridge * train.len() as f64;
    }
    let rhs = a.transpose() * y;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        // Singular without ridge; take the minimum-norm solution.
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(preds.len())),
    };
    let t = design(test);
    (t * beta).iter().map(|v| v + y_mean).collect()
}
