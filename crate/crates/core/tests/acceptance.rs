//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use oncopipe::crf::*;
use oncopipe::losses::*;
use oncopipe::metrics::*;
use oncopipe::nalgebra::DMatrix;
use oncopipe::pipeline::config::PreprocessConfig;
use oncopipe::pipeline::synth::{phantom, simulate_survival, PhantomSpec, SurvivalSim};
use oncopipe::radiomics::*;
use oncopipe::survival::*;
use oncopipe::tabular::*;
use oncopipe::volume::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Collects failed checks for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 5 {
            self.failures.push(what());
        } else if !ok {
            self.failures.push(String::new());
        }
    }

    fn close(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, || format!("{label}: got {got}, want {want} (tol {tol:e})"));
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn mask_from(g: Geometry, bits: &[u8]) -> Mask3D {
    Mask3D::new(g, bits.iter().map(|&b| b == 1).collect()).unwrap()
}

// 1 -----------------------------------------------------------------------

fn metric_oracles(c: &mut Checks) {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let mut voxels = 0;
    for case in 0..200 {
        let g = Geometry::new(common::random_dims(&mut rng, 8), common::random_spacing(&mut rng), [0.0; 3]).unwrap();
        let (da, db) = (rng.random_range(0.02..0.8), rng.random_range(0.02..0.8));
        let a = common::random_mask(&mut rng, g, da);
        let b = common::random_mask(&mut rng, g, db);
        voxels += g.len();
        let s = score_pair(&a, &b).unwrap();
        let (dsc, avg, h95) = common::brute_scores(&a, &b);
        c.check(s.dsc == dsc && s.avg_hd == avg && s.hd95 == h95, || {
            format!("pair {case}: library {s:?} vs oracle ({dsc}, {avg}, {h95})")
        });
        c.check(nearest_distances(&a, &b).unwrap() == common::brute_nearest(&a, &b), || {
            format!("pair {case}: nearest-distance lists differ")
        });
    }
    let g = Geometry::unit([7, 1, 1]).unwrap();
    let p = mask_from(g, &[1, 1, 1, 0, 0, 0, 0]);
    let t = mask_from(g, &[0, 1, 1, 1, 1, 0, 0]);
    c.close("hand DSC |P|=3 |G|=4 overlap 2", dice_similarity(&p, &t).unwrap(), 4.0 / 7.0, 1e-12);
    let took = start.elapsed();
    c.check(took < Duration::from_secs(10), || format!("took {took:?}"));
    c.note(format!("200 pairs, {voxels} voxels, {:.2}s", took.as_secs_f64()));
}

// 2 -----------------------------------------------------------------------

fn loss_correctness(c: &mut Checks) {
    let d = LossParams::default();
    let eps = d.epsilon;
    c.close("dice exact", dice_loss(&[1.0, 0.0], &[1.0, 0.0], &d).unwrap(), 0.0, 1e-9);
    c.close("dice all zero", dice_loss(&[0.0; 4], &[0.0; 4], &d).unwrap(), 0.0, 1e-9);
    c.close("dice half", dice_loss(&[1.0, 0.0], &[0.5, 0.5], &d).unwrap(), 1.0 - 2.0 / 3.0, 1e-9);
    c.close("focal confident", focal_loss(&[1.0], &[1.0 - eps], &d).unwrap(), 0.0, 1e-9);
    let g0 = LossParams { gamma: 0.0, ..d };
    c.close("focal gamma 0", focal_loss(&[1.0], &[(-1f64).exp()], &g0).unwrap(), 1.0, 1e-9);
    c.close("focal gamma 2", focal_loss(&[1.0], &[0.5], &d).unwrap(), 0.25 * 2f64.ln(), 1e-9);
    c.close("log-cosh zero", log_cosh_dice_focal(&[1.0, 0.0], &[1.0, 0.0], &d).unwrap(), 0.0, 1e-9);
    let composed = (1.0f64 / 3.0).cosh().ln() + 0.25 * 2f64.ln() / 2.0;
    c.close("log-cosh composed", log_cosh_dice_focal(&[1.0, 0.0], &[0.5, 0.5], &d).unwrap(), composed, 1e-9);
    // d = 1 cannot be produced by dice_loss itself; check the outer map on its own
    c.close("log cosh 1", 1f64.cosh().ln(), 0.4338, 5e-5);

    let mut rng = common::rng(2);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let y: Vec<f64> = (0..64).map(|_| rng.random_bool(0.4) as u8 as f64).collect();
        let p: Vec<f64> = (0..64).map(|_| rng.random_range(0.005..0.995)).collect();
        let params = LossParams { gamma: rng.random_range(0.0..4.0), ..d };
        for kind in [LossKind::Dice, LossKind::Focal, LossKind::LogCoshDiceFocal] {
            let g = loss_gradient(kind, &y, &p, &params).unwrap();
            let fd = common::central_diff(|q| loss_value(kind, &y, q, &params).unwrap(), &p, 1e-5);
            let e = common::max_rel_err(&g, &fd);
            worst = worst.max(e);
            c.check(e < 1e-4, || format!("instance {inst} {kind:?}: relative error {e:e}"));
        }
    }
    c.note(format!("9 hand values, 300 gradient checks, worst rel err {worst:.1e}"));
}

// 3 -----------------------------------------------------------------------

fn crf_equivalence(c: &mut Checks) {
    let mut rng = common::rng(3);
    let mut worst_diff: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for case in 0..50 {
        let g = Geometry::new(common::random_dims(&mut rng, 4), common::random_spacing(&mut rng), [0.0; 3]).unwrap();
        let map = ProbMap3D::from_volume(common::random_volume(&mut rng, g, 0.0, 1.0)).unwrap();
        let refs = [common::random_volume(&mut rng, g, -1.0, 1.0), common::random_volume(&mut rng, g, -1.0, 1.0)];
        let params = CrfParams {
            w_appearance: rng.random_range(0.0..5.0),
            w_smoothness: rng.random_range(0.0..3.0),
            theta_alpha: rng.random_range(0.5..40.0),
            theta_beta: rng.random_range(0.1..2.0),
            theta_gamma: rng.random_range(0.5..5.0),
            iterations: rng.random_range(1..=8),
            neighborhood_radius: 4,
        };
        let u = unary_from_prob(&map);
        let fast = meanfield_observed(&u, &refs, &params, |_, q| {
            worst_norm = worst_norm.max(q.max_normalization_error());
        })
        .unwrap();
        let slow = naive_meanfield(&u, &refs, &params).unwrap();
        let diff = fast.foreground.iter().zip(&slow.foreground).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_diff = worst_diff.max(diff);
        c.check(diff <= 1e-9, || format!("grid {case} {:?}: max |windowed - naive| = {diff:e}", g.dims));
        worst_norm = worst_norm.max(slow.max_normalization_error());
    }
    c.check(worst_norm <= 1e-9, || format!("normalisation error {worst_norm:e}"));

    // one confident voxel in a confident background of identical intensity
    let g = Geometry::unit([7, 7, 7]).unwrap();
    let centre = g.index(3, 3, 3);
    let mut probs = vec![0.02; g.len()];
    probs[centre] = 0.9;
    let map = ProbMap3D::new(g, probs).unwrap();
    let refs = [Volume3D::filled(g, 0.1), Volume3D::filled(g, 0.4)];
    let params = CrfParams::default();
    let q = meanfield_refine(&unary_from_prob(&map), &refs, &params).unwrap();
    let n = naive_meanfield(&unary_from_prob(&map), &refs, &params).unwrap();
    c.check(q.foreground[centre] < 0.5, || format!("false positive kept: {}", q.foreground[centre]));
    c.close("false positive vs naive", q.foreground[centre], n.foreground[centre], 1e-9);
    let (mask, _) = refine_mask(&map, &refs[0], &refs[1], &params, 0.5).unwrap();
    c.check(mask.count() == 0, || format!("{} voxels left after refinement", mask.count()));
    c.note(format!(
        "50 grids, max diff {worst_diff:.1e}, max norm err {worst_norm:.1e}, false positive marginal {:.2e}",
        q.foreground[centre]
    ));
}

// 4 -----------------------------------------------------------------------

/// Same truncation radius the synthetic cohort config uses; the default
/// radius of 7 gives a 15^3 window per voxel and is far slower at 24^3.
const PHANTOM_CRF_RADIUS: usize = 3;

fn crf_improves_phantoms(c: &mut Checks) {
    let spec = PhantomSpec::default();
    let pp = PreprocessConfig::default();
    let params = CrfParams { neighborhood_radius: PHANTOM_CRF_RADIUS, ..Default::default() };
    let (mut before, mut after) = (0.0, 0.0);
    let mut better = 0;
    for seed in 0..20 {
        let ph = phantom(&spec, 1000 + seed).unwrap();
        let ens = ensemble_mean(&ph.probmaps).unwrap();
        let plain = threshold_map(&ens, 0.5).unwrap();
        let ct = clip_intensities(&ph.ct, pp.ct_clip[0], pp.ct_clip[1], pp.ct_prescale).unwrap();
        let pet = zscore_normalize(&ph.pet).unwrap();
        let (refined, _) = refine_mask(&ens, &ct, &pet, &params, 0.5).unwrap();
        let b = dice_similarity(&plain, &ph.truth).unwrap();
        let a = dice_similarity(&refined, &ph.truth).unwrap_or(0.0);
        better += (a >= b) as usize;
        before += b / 20.0;
        after += a / 20.0;
    }
    c.check(after >= before, || format!("mean DSC fell from {before:.4} to {after:.4}"));
    c.note(format!(
        "mean DSC {before:.4} -> {after:.4}, {better}/20 not worse, radius {PHANTOM_CRF_RADIUS}"
    ));
}

// 5 -----------------------------------------------------------------------

fn cox_oracle(c: &mut Checks) {
    let mut rng = common::rng(5);
    let mut worst: f64 = 0.0;
    for k in 0..25 {
        let b = rng.random_range(-1.5..1.5);
        let data = simulate_survival(&SurvivalSim { n: 60, beta: vec![b], ..Default::default() }, 500 + k).unwrap();
        let fit = fit_coxph(&data, &CoxParams::default()).unwrap();
        let x: Vec<f64> = data.x.column(0).iter().copied().collect();
        let grid = common::SortedCox::new(&x, &data.time, &data.event).grid_argmin(-5.0, 5.0, 1e-4);
        let d = (fit.beta[0] - grid).abs();
        worst = worst.max(d);
        c.check(d <= 1e-3, || format!("problem {k}: fitted {} vs grid {grid}", fit.beta[0]));
    }

    let mut worst_shift: f64 = 0.0;
    let mut pairs = 0;
    for trial in 0..40 {
        let n = rng.random_range(2..=200);
        let time: Vec<f64> = (0..n).map(|_| rng.random_range(1..=n.max(4) / 2) as f64).collect();
        let mut event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        event[0] = true;
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let base = neg_log_partial_likelihood(&eta, &time, &event).unwrap();
        for shift in [-30.0, -1.0, 0.5, 25.0] {
            let moved: Vec<f64> = eta.iter().map(|e| e + shift).collect();
            let d = (neg_log_partial_likelihood(&moved, &time, &event).unwrap() - base).abs();
            worst_shift = worst_shift.max(d);
            c.check(d <= 1e-9, || format!("trial {trial}: shift {shift} moved the likelihood by {d:e}"));
        }
        let risk: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let comparable = (0..n).any(|i| event[i] && (0..n).any(|j| time[i] < time[j]));
        if comparable {
            pairs += 1;
            let got = concordance_index(&risk, &time, &event).unwrap();
            let want = common::brute_cindex(&risk, &time, &event);
            c.check(got == want, || format!("trial {trial} n={n}: C {got} vs enumeration {want}"));
        }
    }
    c.note(format!(
        "max |beta - grid| {worst:.1e}, max shift change {worst_shift:.1e}, {pairs} C-index checks"
    ));
}

// 6 -----------------------------------------------------------------------

fn cv_mean(data: &SurvivalDataset, spec: &ModelSpec, splits: &[(Vec<usize>, Vec<usize>)]) -> f64 {
    let scores = cross_validate(data, spec, splits).unwrap();
    scores.iter().map(|s| s.c_index).sum::<f64>() / scores.len() as f64
}

fn survival_recovery(c: &mut Checks) {
    let mut beta = vec![0.0; 10];
    beta[0] = 1.0;
    beta[1] = -0.8;
    beta[2] = 0.6;
    let data = simulate_survival(&SurvivalSim { n: 500, beta, ..Default::default() }, 6).unwrap();
    let splits = kfold_cv(&data.event, 5, true, 6).unwrap();
    let cox = ModelSpec::Coxph(CoxParams::default());
    let rsf = ModelSpec::Rsf(RsfParams { seed: 6, ..Default::default() });
    let c_cox = cv_mean(&data, &cox, &splits);
    let c_rsf = cv_mean(&data, &rsf, &splits);
    c.check(c_cox >= 0.70, || format!("CoxPH held-out C {c_cox:.3}"));
    c.check(c_rsf >= 0.70, || format!("RSF held-out C {c_rsf:.3}"));

    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.shuffle(&mut common::rng(66));
    let shuffled = SurvivalDataset::new(
        data.x.clone(),
        perm.iter().map(|&i| data.time[i]).collect(),
        perm.iter().map(|&i| data.event[i]).collect(),
        data.names.clone(),
    )
    .unwrap();
    let splits = kfold_cv(&shuffled.event, 5, true, 6).unwrap();
    let p_cox = cv_mean(&shuffled, &cox, &splits);
    let p_rsf = cv_mean(&shuffled, &rsf, &splits);
    c.check((p_cox - 0.5).abs() <= 0.05, || format!("permuted CoxPH C {p_cox:.3}"));
    c.check((p_rsf - 0.5).abs() <= 0.05, || format!("permuted RSF C {p_rsf:.3}"));
    c.note(format!(
        "events {}/500, C coxph {c_cox:.3} rsf {c_rsf:.3}, permuted coxph {p_cox:.3} rsf {p_rsf:.3}",
        data.events()
    ));
}

// 7 -----------------------------------------------------------------------

fn mlp_checks(c: &mut Checks) {
    let mut rng = common::rng(7);
    let x = DMatrix::from_fn(5, 3, |_, _| normal(&mut rng));
    let data = SurvivalDataset::new(
        x,
        vec![3.0, 1.0, 4.0, 2.0, 5.0],
        vec![true, true, false, true, true],
        (0..3).map(|j| format!("x{j}")).collect(),
    )
    .unwrap();
    let params = MlpParams { hidden: vec![6, 4], dropout: 0.0, l2: 1e-3, seed: 7, ..Default::default() };
    let mut model = MlpCoxModel::init(&data, &params).unwrap();
    let (_, grads) = model.loss_and_gradient(&data).unwrap();
    let theta = model.parameters();
    let fd = common::central_diff(
        |t| {
            let mut m = model.clone();
            m.set_parameters(t).unwrap();
            m.loss(&data).unwrap()
        },
        &theta,
        1e-5,
    );
    let mut offset = 0;
    let mut per_layer = Vec::new();
    for (layer, g) in grads.iter().enumerate() {
        let analytic: Vec<f64> = g.weights.iter().chain(g.bias.iter()).copied().collect();
        let numeric = &fd[offset..offset + analytic.len()];
        offset += analytic.len();
        let e = common::max_rel_err(&analytic, numeric);
        per_layer.push(format!("{e:.1e}"));
        c.check(e < 1e-4, || format!("layer {layer}: relative error {e:e}"));
    }
    c.check(offset == theta.len(), || "gradient layout does not cover every parameter".into());
    model.set_parameters(&theta).unwrap();

    let sep = simulate_survival(
        &SurvivalSim { n: 200, beta: vec![2.5, -2.5], censor_max: 1e9, ..Default::default() },
        77,
    )
    .unwrap();
    let fit = fit_mlp_cox(&sep, &MlpParams { dropout: 0.0, epochs: 10, seed: 7, ..Default::default() }).unwrap();
    let decreasing = fit.loss_trace.windows(2).all(|w| w[1] < w[0]);
    c.check(fit.loss_trace.len() >= 10 && decreasing, || format!("loss trace {:?}", fit.loss_trace));
    let long = fit_mlp_cox(&sep, &MlpParams { dropout: 0.0, seed: 7, ..Default::default() }).unwrap();
    let cox = fit_coxph(&sep, &CoxParams::default()).unwrap();
    let c_mlp = concordance_index(&long.predict(&sep.x).unwrap(), &sep.time, &sep.event).unwrap();
    let c_cox = concordance_index(&cox_risk(&cox, &sep.x).unwrap(), &sep.time, &sep.event).unwrap();
    c.check(c_mlp >= c_cox - 0.05, || format!("MLP C {c_mlp:.3} vs CoxPH {c_cox:.3}"));
    c.note(format!(
        "per-layer rel err [{}], 10-epoch loss {:.3} -> {:.3}, C mlp {c_mlp:.3} coxph {c_cox:.3}",
        per_layer.join(", "),
        fit.loss_trace[0],
        fit.loss_trace.last().unwrap()
    ));
}

// 8 -----------------------------------------------------------------------

fn latent_table(rng: &mut impl Rng, n: usize, p: usize, factors: usize, noise: f64) -> DMatrix<f64> {
    let z = DMatrix::from_fn(n, factors, |_, _| normal(rng));
    let load = DMatrix::from_fn(factors, p, |_, _| normal(rng));
    let mut x = z * load;
    x.iter_mut().for_each(|v| *v += noise * normal(rng));
    x
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("r{i:03}")).collect()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j:02}")).collect()
}

fn standardised(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = x.clone();
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        col.apply(|v| *v = (*v - m) / sd);
    }
    x
}

fn tabular_pipeline(c: &mut Checks) {
    let mut rng = common::rng(8);
    let mut wins = 0;
    for trial in 0..20 {
        let x = latent_table(&mut rng, 120, 6, 2, 0.3);
        let mut holes = Vec::new();
        let cols = (0..6)
            .map(|j| {
                let v = (0..120)
                    .map(|i| {
                        if rng.random_bool(0.1) {
                            holes.push((i, j));
                            None
                        } else {
                            Some(x[(i, j)])
                        }
                    })
                    .collect();
                Column::continuous(format!("x{j}"), v)
            })
            .collect();
        let t = FeatureTable::new(ids(120), cols).unwrap();
        let rmse = |filled: &FeatureTable| {
            let m = filled.to_matrix().unwrap();
            (holes.iter().map(|&(i, j)| (m[(i, j)] - x[(i, j)]).powi(2)).sum::<f64>() / holes.len() as f64).sqrt()
        };
        let it = rmse(&iterative_impute(&t, ImputeParams::default()).unwrap());
        let mean = rmse(&mean_impute(&t).unwrap());
        wins += (it < mean) as usize;
        if trial == 0 {
            c.note(format!("trial 0 RMSE iterative {it:.3} mean {mean:.3}"));
        }
    }
    c.check(wins >= 16, || format!("imputation won {wins}/20"));

    let mut strongest: f64 = 0.0;
    for _ in 0..20 {
        let x = latent_table(&mut rng, 80, 15, 4, 0.4);
        let t = FeatureTable::from_matrix(ids(80), names(15), &x).unwrap();
        let (kept, _) = spearman_filter(&t, 0.8).unwrap();
        let m = kept.to_matrix().unwrap();
        for a in 0..m.ncols() {
            for b in a + 1..m.ncols() {
                let r = spearman_rho(m.column(a).as_slice(), m.column(b).as_slice()).unwrap();
                strongest = strongest.max(r.abs());
            }
        }
    }
    c.check(strongest <= 0.8, || format!("surviving pair with |rho| = {strongest}"));

    let mut recovered = 0;
    let mut exact = 0;
    let mut sweeps = 0usize;
    let mut worst_rise: f64 = 0.0;
    let mut converged = true;
    for trial in 0..20u64 {
        let x = DMatrix::from_fn(100, 20, |_, _| normal(&mut rng));
        let y: Vec<f64> = (0..100).map(|i| 3.0 * x[(i, 1)] - 2.0 * x[(i, 5)] + 0.5 * normal(&mut rng)).collect();
        let (kept, _) = lasso_select(&x, &names(20), &y, &LassoSettings { seed: trial, ..Default::default() }).unwrap();
        recovered += (kept.contains(&1) && kept.contains(&5)) as usize;
        exact += (kept == [1, 5]) as usize;

        let xs = standardised(&x);
        let ym = y.iter().sum::<f64>() / 100.0;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let mut warm: Option<Vec<f64>> = None;
        for lambda in default_lambda_grid(&xs, &yc, 100, 1e-3).unwrap() {
            let fit = lasso_coordinate_descent(&xs, &yc, lambda, warm.as_deref(), 1e-7, 10_000);
            sweeps += fit.sweeps;
            for w in fit.objective_trace.windows(2) {
                worst_rise = worst_rise.max((w[1] - w[0]) / w[0]);
            }
            converged &= fit.converged && fit.max_change < 1e-7;
            warm = Some(fit.coefficients);
        }
    }
    c.check(recovered >= 18, || format!("support {{1,5}} recovered in {recovered}/20"));
    // a converged sweep can move the recomputed objective by rounding only
    c.check(worst_rise <= 1e-12, || format!("objective rose by {worst_rise:e} relative"));
    c.check(converged, || "coordinate descent hit the sweep cap".into());
    c.note(format!(
        "imputation wins {wins}/20, max surviving |rho| {strongest:.3}, support kept {recovered}/20 (exactly {exact}/20), {sweeps} sweeps, largest relative rise {worst_rise:.1e}"
    ));
}

// 9 -----------------------------------------------------------------------

fn corrected_ttest(c: &mut Checks) {
    let d = [0.1, 0.2, 0.0, 0.3, 0.1];
    let b = [0.61, 0.66, 0.7, 0.58, 0.64];
    let a: Vec<f64> = b.iter().zip(d).map(|(x, y)| x + y).collect();
    let r = corrected_paired_ttest(&a, &b, 80, 20).unwrap();
    let hand = 0.14 / (0.45f64 * 0.013).sqrt();
    c.close("t statistic", r.t, hand, 1e-9);
    c.check(r.df == 4, || format!("df {}", r.df));
    let same = corrected_paired_ttest(&b, &b, 80, 20).unwrap();
    c.check(same.t == 0.0 && same.p == 1.0, || format!("identical vectors gave t {} p {}", same.t, same.p));
    let shifted: Vec<f64> = b.iter().map(|v| v + 0.1).collect();
    let deg = corrected_paired_ttest(&shifted, &b, 80, 20).unwrap();
    c.check(deg.p == 0.0 && deg.t.is_infinite(), || format!("constant difference gave t {} p {}", deg.t, deg.p));
    c.note(format!("t {:.9} (hand {hand:.9}), p {:.4}", r.t, r.p));
}

// 10 ----------------------------------------------------------------------

fn run_cli(args: &[&str], extra: &[&Path]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_oncopipe"));
    cmd.args(args).args(extra);
    cmd.output().expect("spawn oncopipe")
}

fn determinism_and_round_trips(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    let start = Instant::now();
    let out = run_cli(&["synth", "--seed", "10", "-o"], &[&cohort]);
    c.check(out.status.success(), || format!("synth failed: {}", String::from_utf8_lossy(&out.stderr)));
    let cfg = cohort.join("config.toml");
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for name in ["first", "second"] {
        let target = dir.path().join(name);
        let out = run_cli(&["run", "--config"], &[&cfg, Path::new("-o"), &target]);
        codes.push(out.status.code());
        reports.push(std::fs::read(target.join("report.json")).unwrap_or_default());
    }
    let took = start.elapsed();
    c.check(!reports[0].is_empty(), || "no report written".into());
    c.check(reports[0] == reports[1], || "reports differ between runs".into());
    c.check(took < Duration::from_secs(300), || format!("synth and two runs took {took:?}"));

    let mut rng = common::rng(10);
    let mut files = 0;
    for _ in 0..20 {
        let g = Geometry::new(common::random_dims(&mut rng, 9), [0.7, 1.3, 2.9], [-12.5, 3.25, 40.0]).unwrap();
        let mut v = common::random_volume(&mut rng, g, -3000.0, 3000.0).data().to_vec();
        let specials = [-0.0, 1e-310, f64::MAX, f64::MIN_POSITIVE, 0.1 + 0.2];
        for (slot, s) in v.iter_mut().zip(specials) {
            *slot = s;
        }
        let vol = Volume3D::new(g, v).unwrap();
        for name in ["v.json", "v.nii", "v.nii.gz"] {
            let p = dir.path().join(name);
            let f = VolumeFormat::from_path(&p).unwrap();
            save_volume(&vol, &p, f).unwrap();
            let back = load_volume(&p, f).unwrap();
            let same = back.dims() == vol.dims()
                && back.data().iter().zip(vol.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            c.check(same, || format!("{name} did not round-trip bit-exactly"));
            files += 1;
        }
    }
    c.note(format!(
        "report {} bytes identical={}, exit codes {:?}, {:.1}s; {files} volume round trips",
        reports[0].len(),
        reports[0] == reports[1],
        codes,
        took.as_secs_f64()
    ));
}

// 11 ----------------------------------------------------------------------

fn roi(levels: usize, voxels: &[([usize; 3], usize)]) -> DiscretizedRoi {
    DiscretizedRoi::new(levels, voxels.to_vec(), [1.0; 3]).unwrap()
}

fn feature(f: &FeatureVector, name: &str) -> f64 {
    f.get(name).unwrap_or(f64::NAN)
}

/// Contrast from every ordered voxel pair whose offset is one of the 13
/// directions or its negation.
fn brute_contrast(r: &DiscretizedRoi) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (a, la) in r.voxel_coords.iter().zip(&r.voxel_levels) {
        for (b, lb) in r.voxel_coords.iter().zip(&r.voxel_levels) {
            let off = [0, 1, 2].map(|k| b[k] as isize - a[k] as isize);
            let neg = off.map(|v| -v);
            if DIRECTIONS_13.contains(&off) || DIRECTIONS_13.contains(&neg) {
                num += (*la as f64 - *lb as f64).powi(2);
                pairs += 1.0;
            }
        }
    }
    num / pairs
}

fn radiomics_checks(c: &mut Checks) {
    let line = |vals: &[f64]| {
        let g = Geometry::unit([vals.len(), 1, 1]).unwrap();
        (Volume3D::new(g, vals.to_vec()).unwrap(), Mask3D::filled(g, true))
    };
    let (v, m) = line(&[0.0, 1.0, 2.0, 3.0]);
    let levels = discretize(&v, &m, 4).unwrap().voxel_levels;
    c.check(levels == [1, 2, 3, 4], || format!("binning {levels:?}"));
    let (v, m) = line(&[5.0; 3]);
    c.check(discretize(&v, &m, 8).unwrap().voxel_levels == [1; 3], || "constant ROI levels".into());
    c.check(discretize(&v, &Mask3D::filled(*v.geometry(), false), 4).is_err(), || "empty mask accepted".into());

    let (v, m) = line(&[-1.0, 1.0]);
    let f = intensity_features(&v, &m).unwrap();
    c.close("mean {-1,1}", feature(&f, "mean"), 0.0, 1e-9);
    c.close("variance {-1,1}", feature(&f, "variance"), 1.0, 1e-9);
    let (v, m) = line(&[-2.0, -1.0, 1.0, 2.0]);
    c.close("skewness symmetric", feature(&intensity_features(&v, &m).unwrap(), "skewness"), 0.0, 1e-9);
    let (v, m) = line(&[4.0; 5]);
    let s = intensity_stats(&v, &m).unwrap();
    c.check(s.mean == 4.0 && s.variance == 0.0 && s.entropy == 0.0 && s.skewness.is_none(), || format!("constant ROI {s:?}"));
    c.check(intensity_features(&v, &m).is_err(), || "constant ROI skewness accepted".into());

    let one = Mask3D::filled(Geometry::unit([1, 1, 1]).unwrap(), true);
    let f = shape_features(&one).unwrap();
    c.close("voxel volume", feature(&f, "volume"), 1.0, 1e-9);
    c.close("voxel area", feature(&f, "surface_area"), 6.0, 1e-9);
    let sph = std::f64::consts::PI.cbrt() * 6f64.powf(2.0 / 3.0) / 6.0;
    c.close("voxel sphericity", feature(&f, "sphericity"), sph, 1e-9);
    c.close("sphericity ~0.806", sph, 0.806, 5e-4);
    let two = Mask3D::filled(Geometry::unit([2, 1, 1]).unwrap(), true);
    let f = shape_features(&two).unwrap();
    c.close("block volume", feature(&f, "volume"), 2.0, 1e-9);
    c.close("block area", feature(&f, "surface_area"), 10.0, 1e-9);
    let big = Mask3D::filled(Geometry::new([2, 1, 1], [2.0; 3], [0.0; 3]).unwrap(), true);
    let fb = shape_features(&big).unwrap();
    c.close("volume scales s^3", feature(&fb, "volume"), 16.0, 1e-9);
    c.close("area scales s^2", feature(&fb, "surface_area"), 40.0, 1e-9);

    let flat = roi(3, &[([0, 0, 0], 2), ([1, 0, 0], 2), ([0, 1, 0], 2)]);
    c.close("constant contrast", feature(&glcm_features(&flat).unwrap(), "contrast"), 0.0, 1e-9);
    let pair = roi(2, &[([0, 0, 0], 1), ([1, 0, 0], 2)]);
    let p = glcm(&pair, &[[1, 0, 0]]).unwrap();
    c.check(p == [0.0, 0.5, 0.5, 0.0], || format!("pair GLCM {p:?}"));
    let f = glcm_features_with(&pair, &[[1, 0, 0]]).unwrap();
    c.close("pair contrast", feature(&f, "contrast"), 1.0, 1e-9);
    c.close("pair entropy", feature(&f, "joint_entropy"), 1.0, 1e-9);
    c.check(glcm_features(&roi(2, &[([0, 0, 0], 1)])).is_err(), || "single voxel GLCM accepted".into());
    let checker = roi(2, &[([0, 0, 0], 1), ([1, 0, 0], 2), ([0, 1, 0], 2), ([1, 1, 0], 1)]);
    c.close(
        "checkerboard contrast",
        feature(&glcm_features(&checker).unwrap(), "contrast"),
        brute_contrast(&checker),
        1e-9,
    );

    let f = glrlm_features_with(&roi(2, &[([0, 0, 0], 1)]), &[[1, 0, 0]]).unwrap();
    c.close("single run SRE", feature(&f, "short_run_emphasis"), 1.0, 1e-9);
    c.close("single run LRE", feature(&f, "long_run_emphasis"), 1.0, 1e-9);
    let row = roi(2, &[([0, 0, 0], 1), ([1, 0, 0], 1), ([2, 0, 0], 1)]);
    let f = glrlm_features_with(&row, &[[1, 0, 0]]).unwrap();
    c.close("run of 3 SRE", feature(&f, "short_run_emphasis"), 1.0 / 9.0, 1e-9);
    c.close("run of 3 LRE", feature(&f, "long_run_emphasis"), 9.0, 1e-9);
    let alt = roi(2, &[([0, 0, 0], 1), ([1, 0, 0], 2), ([2, 0, 0], 1), ([3, 0, 0], 2)]);
    let f = glrlm_features_with(&alt, &[[1, 0, 0]]).unwrap();
    c.close("alternating SRE", feature(&f, "short_run_emphasis"), 1.0, 1e-9);
    c.close("alternating LRE", feature(&f, "long_run_emphasis"), 1.0, 1e-9);

    let block: Vec<([usize; 3], usize)> = (0..8).map(|i| ([i % 2, (i / 2) % 2, i / 4], 3)).collect();
    let f = glszm_features(&roi(4, &block)).unwrap();
    c.close("one zone SZE", feature(&f, "small_zone_emphasis"), 1.0 / 64.0, 1e-9);
    c.close("one zone ZSN", feature(&f, "zone_size_nonuniformity"), 1.0, 1e-9);
    let apart = roi(2, &[([0, 0, 0], 1), ([2, 2, 2], 2)]);
    let f = glszm_features(&apart).unwrap();
    c.close("isolated SZE", feature(&f, "small_zone_emphasis"), 1.0, 1e-9);
    c.close("isolated ZSN", feature(&f, "zone_size_nonuniformity"), 2.0, 1e-9);
    c.check(common::brute_zone_sizes(&apart.voxel_coords, &apart.voxel_levels) == [1, 1], || "oracle zones".into());
    let f = glszm_features(&roi(2, &[([0, 0, 0], 2)])).unwrap();
    c.close("single voxel SZE", feature(&f, "small_zone_emphasis"), 1.0, 1e-9);
    c.close("single voxel ZSN", feature(&f, "zone_size_nonuniformity"), 1.0, 1e-9);

    let mut rng = common::rng(11);
    let mut total = 0;
    for case in 0..100 {
        let g = Geometry::unit(common::random_dims(&mut rng, 6)).unwrap();
        let vol = common::random_volume(&mut rng, g, 0.0, 10.0);
        let density = rng.random_range(0.1..1.0);
        let mask = common::random_mask(&mut rng, g, density);
        let r = discretize(&vol, &mask, rng.random_range(2..8)).unwrap();
        let n = r.len();
        total += n;
        let covered = glrlm(&r, &DIRECTIONS_13).unwrap().covered_voxels();
        c.check(covered == 13 * n as u64, || format!("ROI {case}: runs cover {covered}, want {}", 13 * n));
        let zones = glszm(&r).unwrap();
        let sum: usize = zones.zones.iter().map(|z| z.1).sum();
        c.check(sum == n, || format!("ROI {case}: zones cover {sum} of {n}"));
        let mut sizes: Vec<usize> = zones.zones.iter().map(|z| z.1).collect();
        sizes.sort_unstable();
        c.check(sizes == common::brute_zone_sizes(&r.voxel_coords, &r.voxel_levels), || {
            format!("ROI {case}: zone sizes differ from union-find")
        });
    }
    c.note(format!("hand examples ok, 100 random ROIs with {total} voxels conserved"));
}

type Criterion = (&'static str, fn(&mut Checks));

fn main() {
    let criteria: [Criterion; 11] = [
        ("metric oracles", metric_oracles),
        ("loss values and gradients", loss_correctness),
        ("CRF equivalence", crf_equivalence),
        ("CRF improves phantoms", crf_improves_phantoms),
        ("Cox oracle", cox_oracle),
        ("survival recovery", survival_recovery),
        ("MLP-Cox gradients and training", mlp_checks),
        ("tabular pipeline", tabular_pipeline),
        ("corrected t-test", corrected_ttest),
        ("determinism and round trips", determinism_and_round_trips),
        ("radiomics", radiomics_checks),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut checks = Checks::default();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.failures.push(format!("panicked: {msg}"));
        }
        let ok = checks.failures.is_empty();
        failed += !ok as usize;
        println!(
            "criterion {:>2} {} {name} [{:.1}s] {}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            checks.notes.join("; ")
        );
        for f in checks.failures.iter().filter(|f| !f.is_empty()) {
            println!("    {f}");
        }
        if checks.failures.len() > 5 {
            println!("    ... {} failing checks in total", checks.failures.len());
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
