use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{concordance_index, ModelSpec, SurvivalDataset};
use crate::error::{Error, Result};
use crate::folds::kfold_splits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub c_index: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Seeded k-fold partition; stratification keeps the per-fold event count
/// within one of the mean.
pub fn kfold_cv(event: &[bool], k: usize, stratify_by_event: bool, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if stratify_by_event {
        let events = event.iter().filter(|&&e| e).count();
        if events < k {
            return Err(Error::InvalidParameter(format!(
                "{events} events cannot be stratified into {k} folds"
            )));
        }
    }
    kfold_splits(event.len(), k, seed, stratify_by_event.then_some(event))
}

/// Fits `spec` on each training split and scores the held-out C-index.
pub fn cross_validate(
    data: &SurvivalDataset,
    spec: &ModelSpec,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<Vec<FoldScore>> {
    splits
        .par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            let tr = data.subset(train);
            let te = data.subset(test);
            let model = spec
                .fit(&tr)
                .map_err(|e| e.context(format!("{} fit on fold {fold}", spec.name())))?;
            let risk = model.risk(&te.x)?;
            let c_index = concordance_index(&risk, &te.time, &te.event)
                .map_err(|e| e.context(format!("scoring fold {fold}")))?;
            Ok(FoldScore {
                fold,
                c_index,
                n_train: train.len(),
                n_test: test.len(),
            })
        })
        .collect()
}
