use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub var_diff: f64,
}

/// Nadeau-Bengio corrected resampled paired t-test, two-sided.
pub fn corrected_paired_ttest(a: &[f64], b: &[f64], n_train: usize, n_test: usize) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} scores", a.len(), b.len())));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 paired scores, got {k}")));
    }
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter("training and test sizes must be positive".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let kf = k as f64;
    let mean = d.iter().sum::<f64>() / kf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    let df = k - 1;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / ((1.0 / kf + n_test as f64 / n_train as f64) * var).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64)
            .map_err(|e| Error::InvalidParameter(format!("student t: {e}")))?;
        (t, (2.0 * dist.sf(t.abs())).min(1.0))
    };
    Ok(TTestResult {
        t,
        p,
        df,
        mean_diff: mean,
        var_diff: var,
    })
}
