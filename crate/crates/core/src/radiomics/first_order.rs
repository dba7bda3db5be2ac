use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

/// Histogram bins for the first-order entropy.
pub const ENTROPY_BINS: usize = 64;

/// First-order statistics over the raw (undiscretised) ROI intensities.
/// Skewness and kurtosis are `None` when the ROI has zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityStats {
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    /// Excess (Fisher) kurtosis.
    pub kurtosis: Option<f64>,
    /// Shannon entropy in bits.
    pub entropy: f64,
}

pub(crate) fn roi_values(vol: &Volume3D, mask: &Mask3D) -> Result<Vec<f64>> {
    if vol.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "volume dims {:?} differ from mask dims {:?}",
            vol.dims(),
            mask.dims()
        )));
    }
    let values: Vec<f64> = vol
        .data()
        .iter()
        .zip(mask.data())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyMask("region of interest".into()));
    }
    Ok(values)
}

pub fn intensity_stats(vol: &Volume3D, mask: &Mask3D) -> Result<IntensityStats> {
    let values = roi_values(vol, mask)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let m2 = moment(2);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (Some(moment(3) / m2.powf(1.5)), Some(moment(4) / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let entropy = if hi > lo {
        let width = (hi - lo) / ENTROPY_BINS as f64;
        let mut counts = [0usize; ENTROPY_BINS];
        for v in &values {
            let b = (((v - lo) / width) as usize).min(ENTROPY_BINS - 1);
            counts[b] += 1;
        }
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.log2()
            })
            .sum::<f64>()
    } else {
        0.0
    };

    Ok(IntensityStats {
        mean,
        variance: m2,
        skewness,
        kurtosis,
        entropy,
    })
}

/// mean, variance, skewness, kurtosis, entropy. Errors on a constant ROI.
pub fn intensity_features(vol: &Volume3D, mask: &Mask3D) -> Result<FeatureVector> {
    let s = intensity_stats(vol, mask)?;
    let (Some(skew), Some(kurt)) = (s.skewness, s.kurtosis) else {
        return Err(Error::Degenerate(
            "skewness and kurtosis undefined for a constant ROI".into(),
        ));
    };
    let mut f = FeatureVector::new();
    f.push("mean", s.mean)?;
    f.push("variance", s.variance)?;
    f.push("skewness", skew)?;
    f.push("kurtosis", kurt)?;
    f.push("entropy", s.entropy)?;
    Ok(f)
}
