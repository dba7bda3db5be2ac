//! Two-label fully connected CRF refinement by mean-field inference.
//!
//! Pairwise potentials use the Potts compatibility with a two-kernel Gaussian
//! edge potential: an appearance kernel over position and reference
//! intensities plus a smoothness kernel over position only. The pairwise sum
//! is truncated to a cube of `neighborhood_radius` voxels around each voxel
//! (0 means the whole grid). Updates are synchronous and double buffered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, Mask3D, ProbMap3D, Volume3D};

/// Probability floor used when turning probabilities into unary energies.
pub const UNARY_EPSILON: f64 = 1e-7;

/// Largest grid accepted by [`naive_meanfield`].
pub const NAIVE_MAX_VOXELS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub w_appearance: f64,
    pub w_smoothness: f64,
    /// Spatial bandwidth of the appearance kernel, mm.
    pub theta_alpha: f64,
    /// Intensity bandwidth of the appearance kernel, normalised units.
    pub theta_beta: f64,
    /// Spatial bandwidth of the smoothness kernel, mm.
    pub theta_gamma: f64,
    pub iterations: usize,
    /// Half-width of the pairwise window in voxels; 0 sums over the whole grid.
    pub neighborhood_radius: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            w_appearance: 3.0,
            w_smoothness: 1.0,
            theta_alpha: 30.0,
            theta_beta: 0.5,
            theta_gamma: 3.0,
            iterations: 5,
            neighborhood_radius: 7,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_appearance", self.w_appearance), ("w_smoothness", self.w_smoothness)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {w} must be >= 0")));
            }
        }
        for (name, t) in [
            ("theta_alpha", self.theta_alpha),
            ("theta_beta", self.theta_beta),
            ("theta_gamma", self.theta_gamma),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {t} must be > 0")));
            }
        }
        Ok(())
    }

    /// Pairwise kernel value from squared physical distance and squared
    /// intensity difference.
    #[inline]
    pub fn kernel(&self, dist2: f64, intensity2: f64) -> f64 {
        let a = self.theta_alpha;
        let b = self.theta_beta;
        let g = self.theta_gamma;
        self.w_appearance * (-dist2 / (2.0 * a * a) - intensity2 / (2.0 * b * b)).exp()
            + self.w_smoothness * (-dist2 / (2.0 * g * g)).exp()
    }
}

/// Per-voxel label energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Unary {
    geom: Geometry,
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
}

impl Unary {
    pub fn new(geom: Geometry, foreground: Vec<f64>, background: Vec<f64>) -> Result<Self> {
        if foreground.len() != geom.len() || background.len() != geom.len() {
            return Err(Error::ShapeMismatch("unary length does not match grid".into()));
        }
        Ok(Self {
            geom,
            foreground,
            background,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }
}

/// Mean-field marginals over {background, foreground}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    geom: Geometry,
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
}

impl LabelDistribution {
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn foreground_map(&self) -> Result<ProbMap3D> {
        ProbMap3D::new(self.geom, self.foreground.iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    /// Largest deviation of `Q(fg) + Q(bg)` from 1.
    pub fn max_normalization_error(&self) -> f64 {
        self.foreground
            .iter()
            .zip(&self.background)
            .map(|(a, b)| (a + b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn unary_from_prob(map: &ProbMap3D) -> Unary {
    let (fg, bg) = map
        .data()
        .iter()
        .map(|&p| {
            let p = p.clamp(UNARY_EPSILON, 1.0 - UNARY_EPSILON);
            (-p.ln(), -(1.0 - p).ln())
        })
        .unzip();
    Unary {
        geom: *map.geometry(),
        foreground: fg,
        background: bg,
    }
}

#[inline]
fn two_label_softmax(neg_fg: f64, neg_bg: f64) -> (f64, f64) {
    let m = neg_fg.max(neg_bg);
    let a = (neg_fg - m).exp();
    let b = (neg_bg - m).exp();
    let fg = a / (a + b);
    (fg, 1.0 - fg)
}

fn softmax_unary(unary: &Unary) -> LabelDistribution {
    let (fg, bg) = unary
        .foreground
        .iter()
        .zip(&unary.background)
        .map(|(&u1, &u0)| two_label_softmax(-u1, -u0))
        .unzip();
    LabelDistribution {
        geom: unary.geom,
        foreground: fg,
        background: bg,
    }
}

/// Interleaved per-voxel intensity feature vectors.
struct Features {
    channels: usize,
    values: Vec<f64>,
}

impl Features {
    fn new(geom: &Geometry, reference: &[Volume3D]) -> Result<Self> {
        for (c, v) in reference.iter().enumerate() {
            if v.dims() != geom.dims {
                return Err(Error::ShapeMismatch(format!(
                    "reference volume {c} has dims {:?}, unary grid is {:?}",
                    v.dims(),
                    geom.dims
                )));
            }
        }
        let channels = reference.len();
        let mut values = Vec::with_capacity(channels * geom.len());
        for idx in 0..geom.len() {
            values.extend(reference.iter().map(|v| v.data()[idx]));
        }
        Ok(Self { channels, values })
    }

    #[inline]
    fn distance2(&self, a: usize, b: usize) -> f64 {
        let c = self.channels;
        self.values[a * c..a * c + c]
            .iter()
            .zip(&self.values[b * c..b * c + c])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }
}

struct Offset {
    d: [isize; 3],
    dist2: f64,
}

fn window_offsets(geom: &Geometry, radius: usize) -> Vec<Offset> {
    let r = [0, 1, 2].map(|a| radius.min(geom.dims[a].saturating_sub(1)) as isize);
    let s = geom.spacing;
    let mut out = Vec::new();
    for dz in -r[2]..=r[2] {
        for dy in -r[1]..=r[1] {
            for dx in -r[0]..=r[0] {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let (px, py, pz) = (dx as f64 * s[0], dy as f64 * s[1], dz as f64 * s[2]);
                out.push(Offset {
                    d: [dx, dy, dz],
                    dist2: px * px + py * py + pz * pz,
                });
            }
        }
    }
    out
}

/// Runs mean-field inference and calls `observe` with the initial softmaxed
/// unary and after every iteration.
pub fn meanfield_observed(
    unary: &Unary,
    reference: &[Volume3D],
    params: &CrfParams,
    mut observe: impl FnMut(usize, &LabelDistribution),
) -> Result<LabelDistribution> {
    params.validate()?;
    let geom = unary.geom;
    let features = Features::new(&geom, reference)?;
    let radius = if params.neighborhood_radius == 0 {
        geom.dims.iter().copied().max().unwrap_or(1)
    } else {
        params.neighborhood_radius
    };
    let offsets = window_offsets(&geom, radius);
    let dims = geom.dims.map(|d| d as isize);

    let mut q = softmax_unary(unary);
    observe(0, &q);
    let pairwise_off = params.w_appearance == 0.0 && params.w_smoothness == 0.0;
    for it in 1..=params.iterations {
        if pairwise_off {
            observe(it, &q);
            continue;
        }
        let prev = &q;
        let (fg, bg): (Vec<f64>, Vec<f64>) = (0..geom.len())
            .into_par_iter()
            .map(|i| {
                let c = geom.coords(i);
                let (ci, cj, ck) = (c[0] as isize, c[1] as isize, c[2] as isize);
                let mut msg_fg = 0.0;
                let mut msg_bg = 0.0;
                for o in &offsets {
                    let (x, y, z) = (ci + o.d[0], cj + o.d[1], ck + o.d[2]);
                    if x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2] {
                        continue;
                    }
                    let j = geom.index(x as usize, y as usize, z as usize);
                    let k = params.kernel(o.dist2, features.distance2(i, j));
                    msg_fg += k * prev.background[j];
                    msg_bg += k * prev.foreground[j];
                }
                two_label_softmax(
                    -unary.foreground[i] - msg_fg,
                    -unary.background[i] - msg_bg,
                )
            })
            .unzip();
        q = LabelDistribution {
            geom,
            foreground: fg,
            background: bg,
        };
        observe(it, &q);
    }
    Ok(q)
}

pub fn meanfield_refine(
    unary: &Unary,
    reference: &[Volume3D],
    params: &CrfParams,
) -> Result<LabelDistribution> {
    meanfield_observed(unary, reference, params, |_, _| {})
}

/// Exhaustive O(N^2) mean-field with no truncation, for grids of at most
/// [`NAIVE_MAX_VOXELS`] voxels.
pub fn naive_meanfield(
    unary: &Unary,
    reference: &[Volume3D],
    params: &CrfParams,
) -> Result<LabelDistribution> {
    params.validate()?;
    let geom = unary.geom;
    let n = geom.len();
    if n > NAIVE_MAX_VOXELS {
        return Err(Error::InvalidParameter(format!(
            "naive mean-field limited to {NAIVE_MAX_VOXELS} voxels, got {n}"
        )));
    }
    let features = Features::new(&geom, reference)?;
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let c = geom.coords(i);
            [0, 1, 2].map(|a| c[a] as f64 * geom.spacing[a])
        })
        .collect();

    let mut q = softmax_unary(unary);
    for _ in 0..params.iterations {
        let mut fg = vec![0.0; n];
        let mut bg = vec![0.0; n];
        for i in 0..n {
            let mut msg_fg = 0.0;
            let mut msg_bg = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d2: f64 = (0..3).map(|a| (pos[i][a] - pos[j][a]).powi(2)).sum();
                let k = params.kernel(d2, features.distance2(i, j));
                msg_fg += k * q.background[j];
                msg_bg += k * q.foreground[j];
            }
            let (a, b) = two_label_softmax(
                -unary.foreground[i] - msg_fg,
                -unary.background[i] - msg_bg,
            );
            fg[i] = a;
            bg[i] = b;
        }
        q = LabelDistribution {
            geom,
            foreground: fg,
            background: bg,
        };
    }
    Ok(q)
}

/// Refined mask and foreground marginals for a probability map.
pub fn refine_mask(
    map: &ProbMap3D,
    ct: &Volume3D,
    pet: &Volume3D,
    params: &CrfParams,
    threshold: f64,
) -> Result<(Mask3D, ProbMap3D)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let unary = unary_from_prob(map);
    let q = meanfield_refine(&unary, &[ct.clone(), pet.clone()], params)?;
    let marginal = q.foreground_map()?;
    let mask = crate::volume::threshold_map(&marginal, threshold)?;
    Ok((mask, marginal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3]) -> Geometry {
        Geometry::unit(dims).unwrap()
    }

    #[test]
    fn unary_values() {
        let g = grid([3, 1, 1]);
        let m = ProbMap3D::new(g, vec![0.5, 1.0, (-1f64).exp()]).unwrap();
        let u = unary_from_prob(&m);
        assert!((u.foreground[0] - 2f64.ln()).abs() < 1e-15);
        assert!((u.background[0] - 2f64.ln()).abs() < 1e-15);
        assert!(u.foreground[1] < 1e-6);
        assert!(u.background[1] > 15.0);
        assert!((u.foreground[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_return_input_probabilities() {
        let g = grid([3, 2, 1]);
        let probs = vec![0.1, 0.9, 0.5, 0.3, 0.7, 0.2];
        let m = ProbMap3D::new(g, probs.clone()).unwrap();
        let refs = [Volume3D::from_fn(g, |c| c[0] as f64)];
        let params = CrfParams {
            w_appearance: 0.0,
            w_smoothness: 0.0,
            ..Default::default()
        };
        let q = meanfield_refine(&unary_from_prob(&m), &refs, &params).unwrap();
        let n = naive_meanfield(&unary_from_prob(&m), &refs, &params).unwrap();
        for i in 0..probs.len() {
            assert!((q.foreground[i] - probs[i]).abs() < 1e-12);
            assert!((n.foreground[i] - probs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_input_is_a_fixed_point() {
        let g = grid([4, 3, 2]);
        let m = ProbMap3D::new(g, vec![0.5; g.len()]).unwrap();
        let refs = [Volume3D::filled(g, 1.0), Volume3D::filled(g, -0.3)];
        let q = meanfield_refine(&unary_from_prob(&m), &refs, &CrfParams::default()).unwrap();
        assert!(q.foreground.iter().all(|&p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn single_voxel_and_zero_iterations() {
        let g = grid([1, 1, 1]);
        let m = ProbMap3D::new(g, vec![0.8]).unwrap();
        let refs = [Volume3D::filled(g, 0.0)];
        let p = CrfParams::default();
        let q = naive_meanfield(&unary_from_prob(&m), &refs, &p).unwrap();
        assert!((q.foreground[0] - 0.8).abs() < 1e-12);

        let g = grid([3, 3, 1]);
        let probs: Vec<f64> = (0..9).map(|i| 0.1 * i as f64 + 0.05).collect();
        let m = ProbMap3D::new(g, probs.clone()).unwrap();
        let p0 = CrfParams {
            iterations: 0,
            ..Default::default()
        };
        let q = meanfield_refine(&unary_from_prob(&m), &[Volume3D::filled(g, 0.0)], &p0).unwrap();
        for i in 0..9 {
            assert!((q.foreground[i] - probs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_single_iteration() {
        // 2x2x1 grid, one intensity channel, unit spacing.
        let g = grid([2, 2, 1]);
        let probs = [0.9, 0.2, 0.6, 0.4];
        let intens = [0.0, 1.0, 0.5, 0.2];
        let m = ProbMap3D::new(g, probs.to_vec()).unwrap();
        let refs = [Volume3D::new(g, intens.to_vec()).unwrap()];
        let params = CrfParams {
            w_appearance: 1.5,
            w_smoothness: 0.7,
            theta_alpha: 2.0,
            theta_beta: 0.8,
            theta_gamma: 1.2,
            iterations: 1,
            neighborhood_radius: 1,
        };
        let q = meanfield_refine(&unary_from_prob(&m), &refs, &params).unwrap();

        let pos: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        for i in 0..4 {
            let mut m_fg = 0.0;
            let mut m_bg = 0.0;
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let d2: f64 = (pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2);
                let di: f64 = (intens[i] - intens[j]).powi(2);
                let k = 1.5 * (-d2 / 8.0 - di / (2.0 * 0.64)).exp() + 0.7 * (-d2 / (2.0 * 1.44)).exp();
                m_fg += k * (1.0 - probs[j]);
                m_bg += k * probs[j];
            }
            let a = probs[i] * (-m_fg).exp();
            let b = (1.0 - probs[i]) * (-m_bg).exp();
            assert!((q.foreground[i] - a / (a + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_is_symmetric() {
        let g = Geometry::new([4, 4, 4], [1.0, 1.5, 2.0], [0.0; 3]).unwrap();
        let f = Volume3D::from_fn(g, |c| ((c[0] * 7 + c[1] * 3 + c[2]) % 5) as f64 * 0.3);
        let feats = Features::new(&g, &[f]).unwrap();
        let p = CrfParams::default();
        for i in 0..g.len() {
            for j in 0..g.len() {
                let (ci, cj) = (g.position(g.coords(i)), g.position(g.coords(j)));
                let d_ij: f64 = (0..3).map(|a| (ci[a] - cj[a]).powi(2)).sum();
                let d_ji: f64 = (0..3).map(|a| (cj[a] - ci[a]).powi(2)).sum();
                assert_eq!(
                    p.kernel(d_ij, feats.distance2(i, j)),
                    p.kernel(d_ji, feats.distance2(j, i))
                );
            }
        }
    }

    #[test]
    fn isolated_false_positive_is_removed() {
        let g = grid([9, 9, 9]);
        let centre = g.index(4, 4, 4);
        let mut probs = vec![0.05; g.len()];
        probs[centre] = 0.9;
        let m = ProbMap3D::new(g, probs).unwrap();
        let ct = Volume3D::filled(g, 0.1);
        let pet = Volume3D::filled(g, -0.2);
        let (mask, marg) = refine_mask(&m, &ct, &pet, &CrfParams::default(), 0.5).unwrap();
        assert!(marg.data()[centre] < 0.5);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn rejects_mismatched_reference() {
        let g = grid([2, 2, 2]);
        let m = ProbMap3D::new(g, vec![0.5; 8]).unwrap();
        let bad = [Volume3D::filled(grid([2, 2, 1]), 0.0)];
        assert!(meanfield_refine(&unary_from_prob(&m), &bad, &CrfParams::default()).is_err());
        let big = grid([17, 17, 17]);
        let mb = ProbMap3D::new(big, vec![0.5; big.len()]).unwrap();
        assert!(naive_meanfield(&unary_from_prob(&mb), &[], &CrfParams::default()).is_err());
    }
}
