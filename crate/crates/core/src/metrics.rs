//! Region and distance based segmentation scores.
//!
//! Distances are measured between voxel centres in millimetres. Nearest
//! neighbour searches only visit boundary voxels of the target set: for any
//! voxel outside a set, the closest set voxel always has a 6-neighbour
//! outside the set, so restricting the search does not change the minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, Mask3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScore {
    pub dsc: f64,
    pub avg_hd: f64,
    pub hd95: f64,
}

fn check_pair(pred: &Mask3D, truth: &Mask3D) -> Result<()> {
    if !pred.geometry().same_grid(truth.geometry()) {
        return Err(Error::ShapeMismatch(format!(
            "prediction dims {:?} spacing {:?} vs truth dims {:?} spacing {:?}",
            pred.dims(),
            pred.spacing(),
            truth.dims(),
            truth.spacing()
        )));
    }
    Ok(())
}

/// `2|P ∩ G| / (|P| + |G|)`, defined as 1 when both masks are empty.
pub fn dice_similarity(pred: &Mask3D, truth: &Mask3D) -> Result<f64> {
    check_pair(pred, truth)?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(truth.data()) {
        p += a as usize;
        g += b as usize;
        both += (a && b) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

fn boundary_points(mask: &Mask3D) -> Vec<[usize; 3]> {
    let g = mask.geometry();
    let [nx, ny, nz] = g.dims;
    let inside = |i: isize, j: isize, k: isize| {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && mask.get(i as usize, j as usize, k as usize)
    };
    let mut out = Vec::new();
    for (idx, &m) in mask.data().iter().enumerate() {
        if !m {
            continue;
        }
        let [i, j, k] = g.coords(idx);
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let exposed = !inside(i - 1, j, k)
            || !inside(i + 1, j, k)
            || !inside(i, j - 1, k)
            || !inside(i, j + 1, k)
            || !inside(i, j, k - 1)
            || !inside(i, j, k + 1);
        if exposed {
            out.push([i as usize, j as usize, k as usize]);
        }
    }
    out
}

#[inline]
fn squared_distance(a: [usize; 3], b: [usize; 3], spacing: [f64; 3]) -> f64 {
    let dx = (a[0] as f64 - b[0] as f64) * spacing[0];
    let dy = (a[1] as f64 - b[1] as f64) * spacing[1];
    let dz = (a[2] as f64 - b[2] as f64) * spacing[2];
    dx * dx + dy * dy + dz * dz
}

/// Distance from every voxel of `from` to the nearest voxel of `to`, in
/// `from`'s storage order.
pub fn nearest_distances(from: &Mask3D, to: &Mask3D) -> Result<Vec<f64>> {
    check_pair(from, to)?;
    if from.count() == 0 {
        return Err(Error::EmptyMask("source mask of distance computation".into()));
    }
    if to.count() == 0 {
        return Err(Error::EmptyMask("target mask of distance computation".into()));
    }
    let g: Geometry = *from.geometry();
    let spacing = g.spacing;
    let targets = boundary_points(to);
    let sources: Vec<usize> = from
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    Ok(sources
        .par_iter()
        .map(|&idx| {
            if to.data()[idx] {
                return 0.0;
            }
            let c = g.coords(idx);
            targets
                .iter()
                .map(|&t| squared_distance(c, t, spacing))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Mean over `from` voxels of the distance to the nearest `to` voxel.
pub fn directed_avg_hd(from: &Mask3D, to: &Mask3D) -> Result<f64> {
    let d = nearest_distances(from, to)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

fn require_nonempty(pred: &Mask3D, truth: &Mask3D) -> Result<()> {
    check_pair(pred, truth)?;
    match (pred.count() == 0, truth.count() == 0) {
        (true, true) => Err(Error::EmptyMask("prediction and ground truth".into())),
        (true, false) => Err(Error::EmptyMask("prediction".into())),
        (false, true) => Err(Error::EmptyMask("ground truth".into())),
        _ => Ok(()),
    }
}

/// Mean of the two directed average distances.
pub fn average_hd(pred: &Mask3D, truth: &Mask3D) -> Result<f64> {
    require_nonempty(pred, truth)?;
    Ok(0.5 * (directed_avg_hd(truth, pred)? + directed_avg_hd(pred, truth)?))
}

/// Percentile with linear interpolation between closest ranks
/// (rank `q/100 * (n - 1)` on the sorted values).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("percentile of empty list".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q / 100.0 * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// 95th percentile of both directed nearest-neighbour distance lists pooled.
pub fn hd95(pred: &Mask3D, truth: &Mask3D) -> Result<f64> {
    require_nonempty(pred, truth)?;
    let mut pooled = nearest_distances(pred, truth)?;
    pooled.extend(nearest_distances(truth, pred)?);
    percentile(&pooled, 95.0)
}

pub fn score_pair(pred: &Mask3D, truth: &Mask3D) -> Result<SegScore> {
    require_nonempty(pred, truth)?;
    let p_to_g = nearest_distances(pred, truth)?;
    let g_to_p = nearest_distances(truth, pred)?;
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let avg_hd = 0.5 * (mean(&g_to_p) + mean(&p_to_g));
    let mut pooled = p_to_g;
    pooled.extend(g_to_p);
    Ok(SegScore {
        dsc: dice_similarity(pred, truth)?,
        avg_hd,
        hd95: percentile(&pooled, 95.0)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchScores {
    pub cases: Vec<SegScore>,
    pub mean: SegScore,
}

/// Per-case scores and their unweighted means; the first failing case aborts
/// with its index attached.
pub fn evaluate_batch(pairs: &[(Mask3D, Mask3D)]) -> Result<BatchScores> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation batch".into()));
    }
    let cases = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (p, t))| {
            score_pair(p, t).map_err(|e| Error::Case {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = cases.len() as f64;
    let mean = SegScore {
        dsc: cases.iter().map(|c| c.dsc).sum::<f64>() / n,
        avg_hd: cases.iter().map(|c| c.avg_hd).sum::<f64>() / n,
        hd95: cases.iter().map(|c| c.hd95).sum::<f64>() / n,
    };
    Ok(BatchScores { cases, mean })
}
