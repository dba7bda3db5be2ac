use std::collections::VecDeque;

use super::first_order::roi_values;
use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

/// One representative of each of the 13 opposite-direction pairs of the
/// 26-neighbourhood.
pub const DIRECTIONS_13: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Gray levels of the voxels inside a mask, levels numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    pub levels: usize,
    pub voxel_levels: Vec<usize>,
    pub voxel_coords: Vec<[usize; 3]>,
    pub spacing: [f64; 3],
}

impl DiscretizedRoi {
    pub fn new(levels: usize, voxels: Vec<([usize; 3], usize)>, spacing: [f64; 3]) -> Result<Self> {
        if voxels.is_empty() {
            return Err(Error::EmptyMask("discretised ROI".into()));
        }
        if let Some((_, l)) = voxels.iter().find(|(_, l)| !(1..=levels).contains(l)) {
            return Err(Error::InvalidParameter(format!("level {l} outside [1, {levels}]")));
        }
        let (voxel_coords, voxel_levels) = voxels.into_iter().unzip();
        Ok(Self {
            levels,
            voxel_levels,
            voxel_coords,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.voxel_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_levels.is_empty()
    }

    fn lookup(&self) -> Lookup {
        Lookup::new(self)
    }
}

/// Dense level table over the ROI bounding box; 0 marks "outside".
struct Lookup {
    lo: [isize; 3],
    ext: [isize; 3],
    cells: Vec<usize>,
}

impl Lookup {
    fn new(roi: &DiscretizedRoi) -> Self {
        let mut lo = [isize::MAX; 3];
        let mut hi = [isize::MIN; 3];
        for c in &roi.voxel_coords {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a] as isize);
                hi[a] = hi[a].max(c[a] as isize);
            }
        }
        let ext = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
        let mut cells = vec![0; (ext[0] * ext[1] * ext[2]) as usize];
        let mut out = Self { lo, ext, cells: Vec::new() };
        for (c, &l) in roi.voxel_coords.iter().zip(&roi.voxel_levels) {
            let p = [0, 1, 2].map(|a| c[a] as isize);
            cells[out.offset(p).unwrap()] = l;
        }
        out.cells = cells;
        out
    }

    #[inline]
    fn offset(&self, p: [isize; 3]) -> Option<usize> {
        let q = [0, 1, 2].map(|a| p[a] - self.lo[a]);
        if (0..3).any(|a| q[a] < 0 || q[a] >= self.ext[a]) {
            return None;
        }
        Some((q[0] + self.ext[0] * (q[1] + self.ext[1] * q[2])) as usize)
    }

    #[inline]
    fn level(&self, p: [isize; 3]) -> usize {
        self.offset(p).map_or(0, |o| self.cells[o])
    }
}

fn signed(c: [usize; 3]) -> [isize; 3] {
    c.map(|x| x as isize)
}

fn step(p: [isize; 3], d: [isize; 3], k: isize) -> [isize; 3] {
    [p[0] + k * d[0], p[1] + k * d[1], p[2] + k * d[2]]
}

/// Equal-width binning of in-mask intensities into `bins` levels over
/// `[min, max]`; the maximum falls in the top bin and a constant ROI maps
/// to level 1.
pub fn discretize(vol: &Volume3D, mask: &Mask3D, bins: usize) -> Result<DiscretizedRoi> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("bins must be >= 2, got {bins}")));
    }
    let values = roi_values(vol, mask)?;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let g = vol.geometry();
    let voxels = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(idx, _)| {
            let v = vol.data()[idx];
            let level = if hi > lo {
                (((v - lo) / width).floor() as usize).min(bins - 1) + 1
            } else {
                1
            };
            (g.coords(idx), level)
        })
        .collect();
    DiscretizedRoi::new(bins, voxels, vol.spacing())
}

/// Symmetric, normalised co-occurrence matrix (row-major, `levels x levels`)
/// merged over `directions` at distance 1.
pub fn glcm(roi: &DiscretizedRoi, directions: &[[isize; 3]]) -> Result<Vec<f64>> {
    let n = roi.levels;
    let lut = roi.lookup();
    let mut counts = vec![0u64; n * n];
    let mut total = 0u64;
    for (c, &a) in roi.voxel_coords.iter().zip(&roi.voxel_levels) {
        let p = signed(*c);
        for &d in directions {
            let b = lut.level(step(p, d, 1));
            if b > 0 {
                counts[(a - 1) * n + (b - 1)] += 1;
                counts[(b - 1) * n + (a - 1)] += 1;
                total += 2;
            }
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("no neighbouring voxel pairs for GLCM".into()));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

pub fn glcm_features_with(roi: &DiscretizedRoi, directions: &[[isize; 3]]) -> Result<FeatureVector> {
    let n = roi.levels;
    let p = glcm(roi, directions)?;
    let mut contrast = 0.0;
    let mut entropy = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if pij > 0.0 {
                contrast += (i as f64 - j as f64).powi(2) * pij;
                entropy -= pij * pij.log2();
            }
        }
    }
    let mut f = FeatureVector::new();
    f.push("contrast", contrast)?;
    f.push("joint_entropy", entropy)?;
    Ok(f)
}

/// contrast, joint_entropy over all 13 directions.
pub fn glcm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    glcm_features_with(roi, &DIRECTIONS_13)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthMatrix {
    pub levels: usize,
    pub max_run: usize,
    /// `counts[(level - 1) * max_run + (len - 1)]`
    pub counts: Vec<u64>,
}

impl RunLengthMatrix {
    pub fn runs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of run lengths weighted by run counts.
    pub fn covered_voxels(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (i % self.max_run + 1) as u64)
            .sum()
    }
}

pub fn glrlm(roi: &DiscretizedRoi, directions: &[[isize; 3]]) -> Result<RunLengthMatrix> {
    if roi.is_empty() {
        return Err(Error::EmptyMask("GLRLM ROI".into()));
    }
    let lut = roi.lookup();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (c, &level) in roi.voxel_coords.iter().zip(&roi.voxel_levels) {
        let p = signed(*c);
        for &d in directions {
            if lut.level(step(p, d, -1)) == level {
                continue;
            }
            let mut len = 1;
            while lut.level(step(p, d, len as isize)) == level {
                len += 1;
            }
            runs.push((level, len));
        }
    }
    let max_run = runs.iter().map(|r| r.1).max().unwrap_or(1);
    let mut counts = vec![0u64; roi.levels * max_run];
    for (level, len) in runs {
        counts[(level - 1) * max_run + (len - 1)] += 1;
    }
    Ok(RunLengthMatrix {
        levels: roi.levels,
        max_run,
        counts,
    })
}

pub fn glrlm_features_with(roi: &DiscretizedRoi, directions: &[[isize; 3]]) -> Result<FeatureVector> {
    let m = glrlm(roi, directions)?;
    let nr = m.runs() as f64;
    let mut sre = 0.0;
    let mut lre = 0.0;
    for (i, &c) in m.counts.iter().enumerate() {
        if c > 0 {
            let l = (i % m.max_run + 1) as f64;
            sre += c as f64 / (l * l);
            lre += c as f64 * l * l;
        }
    }
    let mut f = FeatureVector::new();
    f.push("short_run_emphasis", sre / nr)?;
    f.push("long_run_emphasis", lre / nr)?;
    Ok(f)
}

/// short_run_emphasis, long_run_emphasis over all 13 directions.
pub fn glrlm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    glrlm_features_with(roi, &DIRECTIONS_13)
}

/// Zones as (level, size) in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeZoneMatrix {
    pub levels: usize,
    pub zones: Vec<(usize, usize)>,
}

/// 26-connected components of equal gray level.
pub fn glszm(roi: &DiscretizedRoi) -> Result<SizeZoneMatrix> {
    if roi.is_empty() {
        return Err(Error::EmptyMask("GLSZM ROI".into()));
    }
    let lut = roi.lookup();
    let mut seen = vec![false; lut.cells.len()];
    let mut zones = Vec::new();
    let mut queue = VecDeque::new();
    for (c, &level) in roi.voxel_coords.iter().zip(&roi.voxel_levels) {
        let start = signed(*c);
        let o = lut.offset(start).unwrap();
        if seen[o] {
            continue;
        }
        seen[o] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                        if let Some(qo) = lut.offset(q) {
                            if !seen[qo] && lut.cells[qo] == level {
                                seen[qo] = true;
                                queue.push_back(q);
                            }
                        }
                    }
                }
            }
        }
        zones.push((level, size));
    }
    Ok(SizeZoneMatrix {
        levels: roi.levels,
        zones,
    })
}

/// small_zone_emphasis, zone_size_nonuniformity.
pub fn glszm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    let m = glszm(roi)?;
    let nz = m.zones.len() as f64;
    let sze = m
        .zones
        .iter()
        .map(|&(_, s)| 1.0 / (s as f64 * s as f64))
        .sum::<f64>()
        / nz;
    let max_size = m.zones.iter().map(|z| z.1).max().unwrap_or(0);
    let mut per_size = vec![0u64; max_size + 1];
    for &(_, s) in &m.zones {
        per_size[s] += 1;
    }
    let zsn = per_size.iter().map(|&c| (c * c) as f64).sum::<f64>() / nz;
    let mut f = FeatureVector::new();
    f.push("small_zone_emphasis", sze)?;
    f.push("zone_size_nonuniformity", zsn)?;
    Ok(f)
}
