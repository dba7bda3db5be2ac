use rayon::prelude::*;

use super::{BoundingBox, Geometry, Grid, Mask3D, ProbMap3D, Volume3D};
use crate::error::{Error, Result};

/// Divisor applied to CT Hounsfield units before clipping to `[-1, 1]`.
pub const DEFAULT_CT_PRESCALE: f64 = 1024.0;

/// Trilinear resampling onto a new spacing covering the same physical extent.
///
/// Sample positions outside the span of input voxel centres clamp to the
/// nearest edge voxel.
pub fn resample_trilinear(vol: &Volume3D, target_spacing: [f64; 3]) -> Result<Volume3D> {
    if target_spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    let src = vol.geometry();
    let dims = [0, 1, 2].map(|a| {
        let extent = src.dims[a] as f64 * src.spacing[a];
        ((extent / target_spacing[a]).round() as usize).max(1)
    });
    let out_geom = Geometry::new(dims, target_spacing, src.origin)?;

    // Per-axis lookup: (lower index, upper index, upper weight).
    let axis_tables: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            let n = src.dims[a];
            let ratio = target_spacing[a] / src.spacing[a];
            (0..dims[a])
                .map(|o| {
                    let u = (o as f64 + 0.5) * ratio - 0.5;
                    let u = u.clamp(0.0, (n - 1) as f64);
                    let lo = u.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    (lo, hi, u - lo as f64)
                })
                .collect()
        })
        .collect();

    let data: Vec<f64> = (0..out_geom.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = out_geom.coords(idx);
            let (x0, x1, fx) = axis_tables[0][i];
            let (y0, y1, fy) = axis_tables[1][j];
            let (z0, z1, fz) = axis_tables[2][k];
            let at = |x, y, z| vol.get(x, y, z);
            let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
            let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
            let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
            let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
            let c0 = c00 * (1.0 - fy) + c10 * fy;
            let c1 = c01 * (1.0 - fy) + c11 * fy;
            c0 * (1.0 - fz) + c1 * fz
        })
        .collect();
    Volume3D::new(out_geom, data)
}

/// Standardises to zero mean and unit population standard deviation.
pub fn zscore_normalize(vol: &Volume3D) -> Result<Volume3D> {
    let n = vol.len() as f64;
    let mean = vol.data().iter().sum::<f64>() / n;
    let var = vol.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::Degenerate(
            "zero variance volume cannot be z-score normalised".into(),
        ));
    }
    Ok(vol.map(|v| (v - mean) / std))
}

/// Optional division by `prescale`, then clamping to `[lo, hi]`.
pub fn clip_intensities(vol: &Volume3D, lo: f64, hi: f64, prescale: Option<f64>) -> Result<Volume3D> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "clip range requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let div = match prescale {
        Some(p) if p == 0.0 || !p.is_finite() => {
            return Err(Error::InvalidParameter(format!("invalid prescale {p}")))
        }
        Some(p) => p,
        None => 1.0,
    };
    Ok(vol.map(|v| {
        let v = if prescale.is_some() { v / div } else { v };
        v.max(lo).min(hi)
    }))
}

pub fn crop_to_box<T: super::Voxel>(vol: &Grid<T>, bbox: &BoundingBox) -> Result<Grid<T>> {
    let src = vol.geometry();
    if !bbox.fits(src.dims) {
        return Err(Error::InvalidParameter(format!(
            "bounding box start {:?} size {:?} exceeds dims {:?}",
            bbox.start, bbox.size, src.dims
        )));
    }
    let origin = [0, 1, 2].map(|a| src.origin[a] + bbox.start[a] as f64 * src.spacing[a]);
    let geom = Geometry::new(bbox.size, src.spacing, origin)?;
    Ok(Grid::from_fn(geom, |[i, j, k]| {
        vol.get(i + bbox.start[0], j + bbox.start[1], k + bbox.start[2])
    }))
}

pub fn ensemble_mean(maps: &[ProbMap3D]) -> Result<ProbMap3D> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidParameter("ensemble of zero maps".into()))?;
    for (i, m) in maps.iter().enumerate().skip(1) {
        if !m.geometry().same_grid(first.geometry()) {
            return Err(Error::ShapeMismatch(format!(
                "map {i} has dims {:?} / spacing {:?}, expected {:?} / {:?}",
                m.dims(),
                m.geometry().spacing,
                first.dims(),
                first.geometry().spacing
            )));
        }
    }
    let n = maps.len() as f64;
    let data: Vec<f64> = (0..first.data().len())
        .map(|idx| {
            let s: f64 = maps.iter().map(|m| m.data()[idx]).sum();
            (s / n).clamp(0.0, 1.0)
        })
        .collect();
    ProbMap3D::new(*first.geometry(), data)
}

/// Foreground where probability >= `t`.
pub fn threshold_map(map: &ProbMap3D, t: f64) -> Result<Mask3D> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("threshold {t} outside [0, 1]")));
    }
    Ok(map.as_volume().map(|p| p >= t))
}
