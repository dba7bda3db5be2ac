//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use oncopipe::volume::{Geometry, Mask3D, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [0; 3].map(|_| rng.random_range(1..=max))
}

pub fn random_spacing(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [0; 3].map(|_| [0.5, 1.0, 1.5, 2.0, 3.0][rng.random_range(0..5)])
}

/// Random mask with at least one foreground voxel.
pub fn random_mask(rng: &mut ChaCha8Rng, geom: Geometry, density: f64) -> Mask3D {
    let mut data: Vec<bool> = (0..geom.len()).map(|_| rng.random_bool(density)).collect();
    if !data.contains(&true) {
        let i = rng.random_range(0..data.len());
        data[i] = true;
    }
    Mask3D::new(geom, data).unwrap()
}

pub fn random_volume(rng: &mut ChaCha8Rng, geom: Geometry, lo: f64, hi: f64) -> Volume3D {
    Volume3D::new(geom, (0..geom.len()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn voxels(m: &Mask3D) -> Vec<[usize; 3]> {
    let g = m.geometry();
    (0..g.len()).filter(|&i| m.data()[i]).map(|i| g.coords(i)).collect()
}

/// Exhaustive nearest-neighbour distances from every voxel of `from` to any
/// voxel of `to`, in storage order.
pub fn brute_nearest(from: &Mask3D, to: &Mask3D) -> Vec<f64> {
    let s = from.spacing();
    let targets = voxels(to);
    voxels(from)
        .iter()
        .map(|a| {
            targets
                .iter()
                .map(|b| {
                    let d = [0, 1, 2].map(|k| (a[k] as f64 - b[k] as f64) * s[k]);
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn brute_dice(a: &Mask3D, b: &Mask3D) -> f64 {
    let pa = voxels(a);
    let pb = voxels(b);
    if pa.is_empty() && pb.is_empty() {
        return 1.0;
    }
    let both = pa.iter().filter(|v| pb.contains(v)).count();
    2.0 * both as f64 / (pa.len() + pb.len()) as f64
}

/// Percentile by linear interpolation between closest ranks.
pub fn interp_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = q / 100.0 * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// (dsc, average HD, HD95) by exhaustive search.
pub fn brute_scores(pred: &Mask3D, truth: &Mask3D) -> (f64, f64, f64) {
    let pg = brute_nearest(pred, truth);
    let gp = brute_nearest(truth, pred);
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let avg = 0.5 * (mean(&gp) + mean(&pg));
    let pooled: Vec<f64> = pg.iter().chain(&gp).copied().collect();
    (brute_dice(pred, truth), avg, interp_percentile(&pooled, 95.0))
}

/// Harrell's C by enumerating every ordered pair, in half units.
pub fn brute_cindex(risk: &[f64], time: &[f64], event: &[bool]) -> f64 {
    let (mut num, mut den) = (0u64, 0u64);
    for i in 0..risk.len() {
        for j in 0..risk.len() {
            if event[i] && time[i] < time[j] {
                den += 2;
                num += if risk[i] > risk[j] {
                    2
                } else if risk[i] == risk[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    num as f64 / den as f64
}

/// Breslow negative log partial likelihood by explicit risk sets.
pub fn brute_nll(eta: &[f64], time: &[f64], event: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..eta.len() {
        if event[i] {
            let s: f64 = (0..eta.len()).filter(|&j| time[j] >= time[i]).map(|j| eta[j].exp()).sum();
            total -= eta[i] - s.ln();
        }
    }
    total
}

/// Same quantity for a single covariate, with subjects pre-sorted by
/// decreasing time so each risk-set sum is a running total.
pub struct SortedCox {
    x: Vec<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl SortedCox {
    pub fn new(x: &[f64], time: &[f64], event: &[bool]) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap());
        Self {
            x: idx.iter().map(|&i| x[i]).collect(),
            time: idx.iter().map(|&i| time[i]).collect(),
            event: idx.iter().map(|&i| event[i]).collect(),
        }
    }

    pub fn nll(&self, beta: f64) -> f64 {
        let n = self.x.len();
        let mut total = 0.0;
        let mut acc = 0.0;
        let mut i = 0;
        while i < n {
            // ties: every subject sharing this time joins the risk set first
            let mut j = i;
            while j < n && self.time[j] == self.time[i] {
                acc += (beta * self.x[j]).exp();
                j += 1;
            }
            for k in i..j {
                if self.event[k] {
                    total -= beta * self.x[k] - acc.ln();
                }
            }
            i = j;
        }
        total
    }

    /// Minimiser over a uniform grid.
    pub fn grid_argmin(&self, lo: f64, hi: f64, step: f64) -> f64 {
        let steps = ((hi - lo) / step).round() as usize;
        let mut best = (f64::INFINITY, lo);
        for s in 0..=steps {
            let b = lo + s as f64 * step;
            let v = self.nll(b);
            if v < best.0 {
                best = (v, b);
            }
        }
        best.1
    }
}

/// Central finite differences of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error with a small absolute floor so exact zeros compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// 26-connected equal-level components of labelled coordinates, by
/// pairwise union-find.
pub fn brute_zone_sizes(coords: &[[usize; 3]], levels: &[usize]) -> Vec<usize> {
    let n = coords.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            let touching = (0..3).all(|k| coords[a][k].abs_diff(coords[b][k]) <= 1);
            if touching && levels[a] == levels[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut sizes = std::collections::BTreeMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_insert(0) += 1;
    }
    let mut v: Vec<usize> = sizes.into_values().collect();
    v.sort_unstable();
    v
}
