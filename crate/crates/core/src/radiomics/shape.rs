use std::f64::consts::PI;

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::volume::Mask3D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeStats {
    /// mm^3
    pub volume: f64,
    /// Exposed voxel-face area, mm^2.
    pub surface_area: f64,
    pub sphericity: f64,
}

impl ShapeStats {
    pub fn of(mask: &Mask3D) -> Result<Self> {
        let count = mask.count();
        if count == 0 {
            return Err(Error::EmptyMask("shape mask".into()));
        }
        let [sx, sy, sz] = mask.spacing();
        let [nx, ny, nz] = mask.dims();
        let face = [sy * sz, sx * sz, sx * sy];
        let g = mask.geometry();

        let mut exposed = [0usize; 3];
        for (idx, &m) in mask.data().iter().enumerate() {
            if !m {
                continue;
            }
            let [i, j, k] = g.coords(idx);
            let open = |a: usize, lo: bool| -> bool {
                let (c, n) = match a {
                    0 => (i, nx),
                    1 => (j, ny),
                    _ => (k, nz),
                };
                if lo && c == 0 || !lo && c + 1 == n {
                    return true;
                }
                let mut p = [i, j, k];
                p[a] = if lo { c - 1 } else { c + 1 };
                !mask.get(p[0], p[1], p[2])
            };
            for (a, e) in exposed.iter_mut().enumerate() {
                *e += open(a, true) as usize + open(a, false) as usize;
            }
        }

        let volume = count as f64 * sx * sy * sz;
        let surface_area: f64 = (0..3).map(|a| exposed[a] as f64 * face[a]).sum();
        let sphericity = PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / surface_area;
        Ok(Self {
            volume,
            surface_area,
            sphericity,
        })
    }
}

/// volume, surface_area, sphericity.
pub fn shape_features(mask: &Mask3D) -> Result<FeatureVector> {
    let s = ShapeStats::of(mask)?;
    let mut f = FeatureVector::new();
    f.push("volume", s.volume)?;
    f.push("surface_area", s.surface_area)?;
    f.push("sphericity", s.sphericity)?;
    Ok(f)
}
