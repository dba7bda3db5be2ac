use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SelectionReport;
use crate::error::{Error, Result};
use crate::folds::kfold_splits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSettings {
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit grid; overrides `n_lambda` and `lambda_min_ratio`.
    pub lambda_grid: Option<Vec<f64>>,
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            lambda_grid: None,
            tolerance: 1e-7,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    /// Objective after each sweep, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub max_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub chosen_lambda: f64,
    /// Nonzero coefficients at the chosen lambda, standardised scale.
    pub coefficients: BTreeMap<String, f64>,
}

/// (1/2n)||y - X b||^2 + lambda ||b||_1
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let mut rss = 0.0;
    for i in 0..n {
        let fit: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
        rss += (y[i] - fit).powi(2);
    }
    rss / (2.0 * n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Cyclic coordinate descent without intercept; `x` and `y` are expected
/// to be centred. Stops once no coefficient moves by more than `tol` in a
/// sweep. Every sweep must not increase the objective.
pub fn lasso_coordinate_descent(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    warm: Option<&[f64]>,
    tol: f64,
    max_sweeps: usize,
) -> LassoFit {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut beta = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    let objective = |r: &[f64], b: &[f64]| {
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut trace = vec![objective(&resid, &beta)];
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    while sweeps < max_sweeps {
        sweeps += 1;
        max_change = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= a * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        let obj = objective(&resid, &beta);
        let prev = *trace.last().unwrap();
        debug_assert!(
            obj <= prev + 1e-12 * prev.abs().max(1e-300),
            "lasso objective rose from {prev} to {obj}"
        );
        trace.push(obj);
        if max_change < tol {
            break;
        }
    }
    LassoFit {
        coefficients: beta,
        objective_trace: trace,
        sweeps,
        converged: max_change < tol,
        max_change,
    }
}

/// 100 (by default) log-spaced values from max|X'y|/n down to
/// `min_ratio` times that.
pub fn default_lambda_grid(x: &DMatrix<f64>, y: &[f64], count: usize, min_ratio: f64) -> Result<Vec<f64>> {
    let n = x.nrows() as f64;
    let lmax = (0..x.ncols())
        .map(|j| (x.column(j).iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n).abs())
        .fold(0.0, f64::max);
    if lmax <= 0.0 || count == 0 {
        return Err(Error::Degenerate("lambda grid is empty: X'y vanishes".into()));
    }
    if count == 1 {
        return Ok(vec![lmax]);
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lmax * (step * i as f64).exp()).collect())
}

fn centre(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> (DMatrix<f64>, Vec<f64>, Vec<f64>, f64) {
    let m = rows.len() as f64;
    let means: Vec<f64> = (0..x.ncols())
        .map(|j| rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / m)
        .collect();
    let ym = rows.iter().map(|&i| y[i]).sum::<f64>() / m;
    let xc = DMatrix::from_fn(rows.len(), x.ncols(), |r, j| x[(rows[r], j)] - means[j]);
    let yc = rows.iter().map(|&i| y[i] - ym).collect();
    (xc, yc, means, ym)
}

fn fit_path(x: &DMatrix<f64>, y: &[f64], grid: &[f64], s: &LassoSettings) -> Vec<Vec<f64>> {
    let mut warm: Option<Vec<f64>> = None;
    grid.iter()
        .map(|&l| {
            let fit = lasso_coordinate_descent(x, y, l, warm.as_deref(), s.tolerance, s.max_sweeps);
            if !fit.converged {
                log::warn!(
                    "lasso at lambda {l:.3e} stopped after {} sweeps (max change {:.3e})",
                    fit.sweeps,
                    fit.max_change
                );
            }
            warm = Some(fit.coefficients.clone());
            fit.coefficients
        })
        .collect()
}

/// Standardises `x`, picks lambda by k-fold CV mean squared error and
/// returns the indices (into the columns of `x`) with nonzero coefficients
/// at that lambda when refit on all rows.
pub fn lasso_select(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[f64],
    settings: &LassoSettings,
) -> Result<(Vec<usize>, SelectionReport)> {
    let (n, p) = x.shape();
    if names.len() != p || y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "X is {n}x{p} with {} names and {} responses",
            names.len(),
            y.len()
        )));
    }
    if n < settings.folds {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot fill {} folds",
            settings.folds
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in lasso input".into()));
    }

    let mut active = Vec::new();
    let mut zero_var = Vec::new();
    let mut scaled = Vec::new();
    for j in 0..p {
        let col = x.column(j);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) {
            log::warn!("dropping zero-variance column {} before lasso", names[j]);
            zero_var.push(names[j].clone());
        } else {
            active.push(j);
            scaled.extend(col.iter().map(|v| (v - m) / sd));
        }
    }
    let xs = DMatrix::from_vec(n, active.len(), scaled);
    let ym = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();

    let grid = match &settings.lambda_grid {
        Some(g) if g.is_empty() => return Err(Error::InvalidParameter("empty lambda grid".into())),
        Some(g) => {
            if g.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::InvalidParameter("lambda values must be finite and >= 0".into()));
            }
            g.clone()
        }
        None if active.is_empty() => vec![0.0],
        None => default_lambda_grid(&xs, &yc, settings.n_lambda, settings.lambda_min_ratio)?,
    };

    let splits = kfold_splits(n, settings.folds, settings.seed, None)?;
    let fold_errors: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|(train, test)| {
            let (xt, yt, means, ymean) = centre(&xs, y, train);
            let path = fit_path(&xt, &yt, &grid, settings);
            path.iter()
                .map(|beta| {
                    test.iter()
                        .map(|&i| {
                            let pred = ymean
                                + (0..xs.ncols()).map(|j| (xs[(i, j)] - means[j]) * beta[j]).sum::<f64>();
                            (y[i] - pred).powi(2)
                        })
                        .sum::<f64>()
                        / test.len() as f64
                })
                .collect()
        })
        .collect();
    let cv_error: Vec<f64> = (0..grid.len())
        .map(|l| fold_errors.iter().map(|f| f[l]).sum::<f64>() / splits.len() as f64)
        .collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| cv_error[a].total_cmp(&cv_error[b]))
        .unwrap();

    let full = fit_path(&xs, &yc, &grid[..=best], settings);
    let beta = full.last().unwrap();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut coefficients = BTreeMap::new();
    for (a, &j) in active.iter().enumerate() {
        if beta[a] != 0.0 {
            kept.push(j);
            coefficients.insert(names[j].clone(), beta[a]);
        } else {
            dropped.push(names[j].clone());
        }
    }
    let report = SelectionReport {
        kept: kept.iter().map(|&j| names[j].clone()).collect(),
        dropped_by_correlation: Vec::new(),
        dropped_by_lasso: dropped,
        dropped_zero_variance: zero_var,
        lasso: Some(LassoPath {
            lambdas: grid.clone(),
            cv_error,
            chosen_lambda: grid[best],
            coefficients,
        }),
        count_before: p,
        count_after: kept.len(),
    };
    Ok((kept, report))
}
