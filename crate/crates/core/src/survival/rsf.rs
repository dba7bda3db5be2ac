use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, SurvivalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsfParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ceil(sqrt(p)).
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    /// Sample with replacement per tree. Off, every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for RsfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 5,
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        samples: usize,
        /// Nelson-Aalen steps `(time, H(time))` over the leaf samples.
        hazard: Vec<(f64, f64)>,
        /// Sum of `H` over the forest's event-time grid.
        mortality: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    /// Root is node 0.
    pub nodes: Vec<TreeNode>,
}

impl SurvivalTree {
    fn leaf(&self, row: impl Fn(usize) -> f64) -> &TreeNode {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row(*feature) <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes[0] {
            TreeNode::Split { feature, .. } => Some(feature),
            TreeNode::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfModel {
    pub names: Vec<String>,
    pub params: RsfParams,
    pub mtry: usize,
    /// Distinct training event times.
    pub event_times: Vec<f64>,
    pub trees: Vec<SurvivalTree>,
}

fn step_value(steps: &[(f64, f64)], t: f64) -> f64 {
    let k = steps.partition_point(|&(s, _)| s <= t);
    if k == 0 {
        0.0
    } else {
        steps[k - 1].1
    }
}

/// Nelson-Aalen cumulative hazard steps at each distinct event time.
pub fn nelson_aalen(time: &[f64], event: &[bool]) -> Vec<(f64, f64)> {
    let mut idx: Vec<usize> = (0..time.len()).collect();
    idx.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut at_risk = idx.len();
    let mut cum = 0.0;
    let mut out = Vec::new();
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e < idx.len() && time[idx[e]] == time[idx[s]] {
            e += 1;
        }
        let d = idx[s..e].iter().filter(|&&i| event[i]).count();
        if d > 0 {
            cum += d as f64 / at_risk as f64;
            out.push((time[idx[s]], cum));
        }
        at_risk -= e - s;
        s = e;
    }
    out
}

struct Builder<'a> {
    data: &'a SurvivalDataset,
    grid: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn make_leaf(&self, rows: &[usize]) -> TreeNode {
        let time: Vec<f64> = rows.iter().map(|&i| self.data.time[i]).collect();
        let event: Vec<bool> = rows.iter().map(|&i| self.data.event[i]).collect();
        let hazard = nelson_aalen(&time, &event);
        let mortality = self.grid.iter().map(|&t| step_value(&hazard, t)).sum();
        TreeNode::Leaf {
            samples: rows.len(),
            hazard,
            mortality,
        }
    }

    fn grow(&mut self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            samples: 0,
            hazard: Vec::new(),
            mortality: 0.0,
        });
        let events = rows.iter().filter(|&&i| self.data.event[i]).count();
        let split = if rows.len() < 2 * self.min_leaf || events == 0 {
            None
        } else {
            self.best_split(&rows, rng)
        };
        match split {
            None => self.nodes[id] = self.make_leaf(&rows),
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.data.x[(i, feature)] <= threshold);
                let left = self.grow(l, rng);
                let right = self.grow(r, rng);
                self.nodes[id] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    /// Feature and midpoint maximising the log-rank statistic, with both
    /// children holding at least `min_leaf` samples.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let d = self.data;
        let m = rows.len();
        // Rows by time, with tied-time groups, for the log-rank sweep.
        let mut by_time: Vec<usize> = (0..m).collect();
        by_time.sort_by(|&a, &b| d.time[rows[a]].total_cmp(&d.time[rows[b]]));
        let mut groups = Vec::new();
        let mut s = 0;
        while s < m {
            let mut e = s;
            while e < m && d.time[rows[by_time[e]]] == d.time[rows[by_time[s]]] {
                e += 1;
            }
            groups.push((s, e));
            s = e;
        }

        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![false; m];
        for feature in sample(rng, d.p(), self.mtry.min(d.p())).into_iter() {
            let mut by_x: Vec<usize> = (0..m).collect();
            by_x.sort_by(|&a, &b| d.x[(rows[a], feature)].total_cmp(&d.x[(rows[b], feature)]));
            left.iter_mut().for_each(|v| *v = false);
            for cut in 0..m - 1 {
                left[by_x[cut]] = true;
                let lo = d.x[(rows[by_x[cut]], feature)];
                let hi = d.x[(rows[by_x[cut + 1]], feature)];
                let n_left = cut + 1;
                if lo == hi || n_left < self.min_leaf || m - n_left < self.min_leaf {
                    continue;
                }
                let Some(stat) = log_rank(&groups, &by_time, &left, |k| d.event[rows[k]]) else {
                    continue;
                };
                if best.is_none_or(|(b, _, _)| stat > b) {
                    best = Some((stat, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Squared standardised log-rank statistic; `None` if its variance is zero.
fn log_rank(groups: &[(usize, usize)], by_time: &[usize], left: &[bool], event: impl Fn(usize) -> bool) -> Option<f64> {
    let mut y = by_time.len() as f64;
    let mut y_left = left.iter().filter(|&&l| l).count() as f64;
    let (mut num, mut var) = (0.0, 0.0);
    for &(s, e) in groups {
        let (mut dd, mut dl, mut nl) = (0.0, 0.0, 0.0);
        for &k in &by_time[s..e] {
            if left[k] {
                nl += 1.0;
            }
            if event(k) {
                dd += 1.0;
                if left[k] {
                    dl += 1.0;
                }
            }
        }
        if dd > 0.0 {
            num += dl - y_left * dd / y;
            if y > 1.0 {
                let f = y_left / y;
                var += f * (1.0 - f) * (y - dd) / (y - 1.0) * dd;
            }
        }
        y -= (e - s) as f64;
        y_left -= nl;
    }
    (var > 0.0).then(|| num * num / var)
}

pub fn fit_rsf(data: &SurvivalDataset, params: &RsfParams) -> Result<RsfModel> {
    data.require_events()?;
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InvalidParameter("n_trees and min_leaf must be positive".into()));
    }
    if data.p() == 0 {
        return Err(Error::InvalidParameter("forest needs at least one feature".into()));
    }
    let mtry = params.mtry.unwrap_or_else(|| (data.p() as f64).sqrt().ceil() as usize);
    if mtry == 0 || mtry > data.p() {
        return Err(Error::InvalidParameter(format!("mtry {mtry} outside 1..={}", data.p())));
    }
    if data.n() < 2 * params.min_leaf {
        log::warn!(
            "{} samples with min_leaf {}: every tree is a single leaf",
            data.n(),
            params.min_leaf
        );
    }
    let mut grid: Vec<f64> = (0..data.n()).filter(|&i| data.event[i]).map(|i| data.time[i]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..data.n()).map(|_| rng.random_range(0..data.n())).collect()
            } else {
                (0..data.n()).collect()
            };
            let mut b = Builder {
                data,
                grid: &grid,
                mtry,
                min_leaf: params.min_leaf,
                nodes: Vec::new(),
            };
            b.grow(rows, &mut rng);
            SurvivalTree { nodes: b.nodes }
        })
        .collect();
    Ok(RsfModel {
        names: data.names.clone(),
        params: params.clone(),
        mtry,
        event_times: grid,
        trees,
    })
}

impl RsfModel {
    /// Ensemble-averaged cumulative hazard on `event_times` for one row.
    pub fn cumulative_hazard(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.names.len() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.names.len(),
                row.len()
            )));
        }
        let mut acc = vec![0.0; self.event_times.len()];
        for tree in &self.trees {
            if let TreeNode::Leaf { hazard, .. } = tree.leaf(|f| row[f]) {
                for (a, &t) in acc.iter_mut().zip(&self.event_times) {
                    *a += step_value(hazard, t);
                }
            }
        }
        let n = self.trees.len() as f64;
        Ok(acc.into_iter().map(|v| v / n).collect())
    }
}

/// Ensemble mortality: mean over trees of the leaf hazard summed over the
/// training event times.
pub fn rsf_risk(model: &RsfModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_width(model.names.len(), x)?;
    Ok((0..x.nrows())
        .map(|i| {
            model
                .trees
                .iter()
                .map(|t| match t.leaf(|f| x[(i, f)]) {
                    TreeNode::Leaf { mortality, .. } => *mortality,
                    TreeNode::Split { .. } => unreachable!(),
                })
                .sum::<f64>()
                / model.trees.len() as f64
        })
        .collect())
}
