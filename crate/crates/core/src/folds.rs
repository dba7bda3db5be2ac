//! Seeded k-fold partitions shared by Lasso tuning and survival CV.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fold index for every sample. Indices are shuffled with `seed` and dealt
/// round-robin. With `strata`, the shuffled `true` samples are dealt first
/// and the `false` samples continue the deal, so each fold gets a near-equal
/// share of both.
pub fn fold_assignments(n: usize, k: usize, seed: u64, strata: Option<&[bool]>) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidParameter(format!("{n} samples cannot fill {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match strata {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Some(s) => {
            if s.len() != n {
                return Err(Error::ShapeMismatch(format!("{} strata for {n} samples", s.len())));
            }
            let mut pos: Vec<usize> = (0..n).filter(|&i| s[i]).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| !s[i]).collect();
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            pos.extend(neg);
            pos
        }
    };
    let mut fold = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        fold[i] = r % k;
    }
    Ok(fold)
}

/// `(train, test)` index lists, both ascending, one pair per fold.
pub fn kfold_splits(
    n: usize,
    k: usize,
    seed: u64,
    strata: Option<&[bool]>,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let fold = fold_assignments(n, k, seed, strata)?;
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == f);
            (train, test)
        })
        .collect())
}
