use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::likelihood::RiskSets;
use super::{check_width, SurvivalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxParams {
    /// Penalty `ridge / 2 * |beta|^2` added to the negative log likelihood.
    pub ridge: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tolerance: f64,
}

impl Default for CoxParams {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            max_iter: 100,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// From the inverse Hessian; absent if it is singular.
    pub std_errors: Option<Vec<f64>>,
    /// Breslow cumulative baseline hazard as `(time, H0(time))` steps.
    pub baseline: Vec<(f64, f64)>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Penalised objective at each accepted iterate.
    pub objective_trace: Vec<f64>,
}

impl CoxModel {
    pub fn cumulative_baseline(&self, t: f64) -> f64 {
        let k = self.baseline.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline[k - 1].1
        }
    }
}

struct Derivs {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Penalised Breslow objective with its gradient and Hessian. `x` should be
/// column-centred for numerical stability.
fn derivatives(x: &DMatrix<f64>, rs: &RiskSets, event: &[bool], beta: &DVector<f64>, ridge: f64) -> Derivs {
    let (n, p) = x.shape();
    let eta = x * beta;
    let m = eta.max();
    let w: Vec<f64> = (0..n).map(|i| (eta[i] - m).exp()).collect();
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut value = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    let mut hess = DMatrix::<f64>::zeros(p, p);
    for (g, &(s, e)) in rs.groups.iter().enumerate().rev() {
        for &i in &rs.order[s..e] {
            let xi = x.row(i).transpose();
            s0 += w[i];
            s1.axpy(w[i], &xi, 1.0);
            s2.ger(w[i], &xi, &xi, 1.0);
        }
        let d = rs.deaths[g];
        if d == 0 {
            continue;
        }
        let df = d as f64;
        let mean = &s1 / s0;
        value += df * (s0.ln() + m);
        grad.axpy(df, &mean, 1.0);
        hess += (&s2 / s0 - &mean * mean.transpose()) * df;
        for &i in &rs.order[s..e] {
            if event[i] {
                value -= eta[i];
                grad -= x.row(i).transpose();
            }
        }
    }
    value += 0.5 * ridge * beta.norm_squared();
    grad.axpy(ridge, beta, 1.0);
    for k in 0..p {
        hess[(k, k)] += ridge;
    }
    Derivs { value, grad, hess }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = hess.clone().cholesky() {
        return Some(ch.solve(grad));
    }
    hess.clone().lu().solve(grad).filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Newton-Raphson on the Breslow partial likelihood with step halving.
pub fn fit_coxph(data: &SurvivalDataset, params: &CoxParams) -> Result<CoxModel> {
    data.require_events()?;
    if !(params.ridge >= 0.0 && params.ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {}", params.ridge)));
    }
    let (n, p) = data.x.shape();
    let means: Vec<f64> = (0..p).map(|j| data.x.column(j).mean()).collect();
    for j in 0..p {
        if data.x.column(j).iter().all(|&v| v == data.x[(0, j)]) {
            return Err(Error::Degenerate(format!("covariate {} is constant", data.names[j])));
        }
    }
    if n <= p {
        log::warn!("Cox fit with {n} subjects and {p} covariates");
    }
    let xc = DMatrix::from_fn(n, p, |i, j| data.x[(i, j)] - means[j]);
    let rs = RiskSets::new(&data.time, &data.event);

    let mut beta = DVector::<f64>::zeros(p);
    let mut cur = derivatives(&xc, &rs, &data.event, &beta, params.ridge);
    let mut trace = vec![cur.value];
    let mut iterations = 0;
    loop {
        let gnorm = cur.grad.amax();
        if gnorm < params.tolerance {
            break;
        }
        if iterations == params.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: gnorm,
                reason: format!(
                    "Newton iterations exhausted; |beta|max = {:.3e} suggests {}",
                    beta.amax(),
                    if beta.amax() > 20.0 { "monotone likelihood (separation)" } else { "a slow fit" }
                ),
            });
        }
        let dir = newton_direction(&cur.hess, &cur.grad).ok_or_else(|| Error::NonConvergence {
            iterations,
            grad_norm: gnorm,
            reason: "singular Hessian".into(),
        })?;
        // Accept a step when the objective does not rise beyond round-off.
        let slack = 1e-13 * cur.value.abs().max(1.0);
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = &beta - &dir * step;
            let d = derivatives(&xc, &rs, &data.event, &cand, params.ridge);
            if d.value.is_finite() && d.value <= cur.value + slack {
                next = Some((cand, d));
                break;
            }
            step *= 0.5;
        }
        let (b, d) = next.ok_or_else(|| Error::NonConvergence {
            iterations,
            grad_norm: gnorm,
            reason: "step halving could not decrease the objective".into(),
        })?;
        beta = b;
        cur = d;
        trace.push(cur.value);
        iterations += 1;
    }

    let std_errors: Option<Vec<f64>> = cur
        .hess
        .clone()
        .cholesky()
        .map(|ch| ch.inverse().diagonal().iter().map(|v| v.sqrt()).collect());
    // Under separation the gradient vanishes as beta runs off to infinity,
    // so a small gradient alone is not proof of a finite optimum. Flag
    // coefficients whose standard error per covariate SD is enormous.
    for j in 0..p {
        let sd = (xc.column(j).norm_squared() / n as f64).sqrt();
        let se = std_errors.as_ref().map_or(f64::INFINITY, |s| s[j]);
        if !(se * sd <= 1e3) {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: cur.grad.amax(),
                reason: format!(
                    "monotone likelihood: information for {} vanished (beta = {:.3e}); \
                     the covariate separates the outcomes, consider a ridge penalty",
                    data.names[j], beta[j]
                ),
            });
        }
    }
    let eta = &data.x * &beta;
    let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let mut baseline = Vec::new();
    let mut at_risk: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for (g, &(s, e)) in rs.groups.iter().enumerate() {
        if rs.deaths[g] > 0 {
            cum += rs.deaths[g] as f64 / at_risk;
            baseline.push((data.time[rs.order[s]], cum));
        }
        at_risk -= rs.order[s..e].iter().map(|&i| weights[i]).sum::<f64>();
    }

    Ok(CoxModel {
        names: data.names.clone(),
        beta: beta.iter().copied().collect(),
        std_errors,
        baseline,
        iterations,
        grad_norm: cur.grad.amax(),
        objective_trace: trace,
    })
}

/// Linear predictor `X beta`.
pub fn cox_risk(model: &CoxModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_width(model.beta.len(), x)?;
    Ok((0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * model.beta[j]).sum())
        .collect())
}
