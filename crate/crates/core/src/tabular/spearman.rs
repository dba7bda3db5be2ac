use serde::{Deserialize, Serialize};

use super::{FeatureTable, SelectionReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub kept: String,
    pub dropped: String,
    pub rho: f64,
}

/// 1-based ranks with ties sharing their average rank.
fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value".into()));
    }
    pearson(&mid_ranks(x), &mid_ranks(y))
        .ok_or_else(|| Error::Degenerate("constant vector has no rank variance".into()))
}

/// Drops redundant columns. Columns are visited in name order and a column
/// is dropped when its |rho| with an earlier kept column exceeds
/// `threshold`. Constant columns correlate with nothing and are kept.
pub fn spearman_filter(table: &FeatureTable, threshold: f64) -> Result<(FeatureTable, SelectionReport)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let x = table.to_matrix()?;
    let mut names: Vec<(String, usize)> = table
        .column_names()
        .into_iter()
        .enumerate()
        .map(|(j, n)| (n, j))
        .collect();
    names.sort();
    let ranks: Vec<Vec<f64>> = (0..x.ncols())
        .map(|j| mid_ranks(x.column(j).as_slice()))
        .collect();

    let mut kept: Vec<(String, usize)> = Vec::new();
    let mut dropped = Vec::new();
    for (name, j) in names {
        let hit = kept.iter().find_map(|(kn, k)| {
            pearson(&ranks[*k], &ranks[j])
                .filter(|r| r.abs() > threshold)
                .map(|r| (kn.clone(), r))
        });
        match hit {
            Some((kn, rho)) => dropped.push(DroppedPair {
                kept: kn,
                dropped: name,
                rho,
            }),
            None => kept.push((name, j)),
        }
    }

    // Output keeps the original column order.
    let mut kept_names: Vec<(usize, String)> = kept.into_iter().map(|(n, j)| (j, n)).collect();
    kept_names.sort();
    let kept_names: Vec<String> = kept_names.into_iter().map(|(_, n)| n).collect();
    let out = table.select_columns(&kept_names)?;
    let report = SelectionReport {
        count_before: table.n_cols(),
        count_after: kept_names.len(),
        kept: kept_names,
        dropped_by_correlation: dropped,
        ..Default::default()
    };
    Ok((out, report))
}
