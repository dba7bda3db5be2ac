use crate::error::{Error, Result};

/// Subjects sorted by time with tied times grouped. Risk set of a group is
/// that group plus every later one.
pub(crate) struct RiskSets {
    pub order: Vec<usize>,
    /// `[start, end)` ranges into `order`, ascending in time.
    pub groups: Vec<(usize, usize)>,
    /// Events per group.
    pub deaths: Vec<usize>,
}

impl RiskSets {
    pub fn new(time: &[f64], event: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut deaths = Vec::new();
        let mut s = 0;
        while s < order.len() {
            let mut e = s + 1;
            while e < order.len() && time[order[e]] == time[order[s]] {
                e += 1;
            }
            groups.push((s, e));
            deaths.push(order[s..e].iter().filter(|&&i| event[i]).count());
            s = e;
        }
        Self { order, groups, deaths }
    }

    /// Shifted risk-set sums of exp(eta - shift), one per group.
    pub fn risk_sums(&self, eta: &[f64], shift: f64) -> Vec<f64> {
        let mut sums = vec![0.0; self.groups.len()];
        let mut acc = 0.0;
        for (g, &(s, e)) in self.groups.iter().enumerate().rev() {
            acc += self.order[s..e].iter().map(|&i| (eta[i] - shift).exp()).sum::<f64>();
            sums[g] = acc;
        }
        sums
    }
}

pub(crate) fn check_inputs(eta_len: usize, time: &[f64], event: &[bool]) -> Result<()> {
    if eta_len != time.len() || time.len() != event.len() {
        return Err(Error::ShapeMismatch(format!(
            "{eta_len} scores, {} times, {} events",
            time.len(),
            event.len()
        )));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::Degenerate("no events: partial likelihood undefined".into()));
    }
    Ok(())
}

fn max_finite(eta: &[f64]) -> Result<f64> {
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite risk score".into()));
    }
    Ok(eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Breslow negative log partial likelihood,
/// -sum_{events i} [eta_i - ln sum_{t_j >= t_i} exp(eta_j)].
pub fn neg_log_partial_likelihood(eta: &[f64], time: &[f64], event: &[bool]) -> Result<f64> {
    check_inputs(eta.len(), time, event)?;
    let m = max_finite(eta)?;
    let rs = RiskSets::new(time, event);
    Ok(nll_sorted(&rs, eta, event, m))
}

fn nll_sorted(rs: &RiskSets, eta: &[f64], event: &[bool], m: f64) -> f64 {
    let sums = rs.risk_sums(eta, m);
    let mut nll = 0.0;
    for (g, &(s, e)) in rs.groups.iter().enumerate() {
        if rs.deaths[g] == 0 {
            continue;
        }
        let log_s = sums[g].ln();
        for &i in &rs.order[s..e] {
            if event[i] {
                nll -= eta[i] - m - log_s;
            }
        }
    }
    nll
}

/// Loss and its gradient with respect to every risk score.
pub fn nll_and_gradient(eta: &[f64], time: &[f64], event: &[bool]) -> Result<(f64, Vec<f64>)> {
    check_inputs(eta.len(), time, event)?;
    let m = max_finite(eta)?;
    let rs = RiskSets::new(time, event);
    let nll = nll_sorted(&rs, eta, event, m);
    let sums = rs.risk_sums(eta, m);
    let mut grad = vec![0.0; eta.len()];
    let mut acc = 0.0;
    for (g, &(s, e)) in rs.groups.iter().enumerate() {
        acc += rs.deaths[g] as f64 / sums[g];
        for &i in &rs.order[s..e] {
            grad[i] = (eta[i] - m).exp() * acc - if event[i] { 1.0 } else { 0.0 };
        }
    }
    Ok((nll, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let v = neg_log_partial_likelihood(&[0.0, 0.0], &[1.0, 2.0], &[true, true]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(neg_log_partial_likelihood(&[0.7], &[3.0], &[true]).unwrap(), 0.0);
        assert!(neg_log_partial_likelihood(&[0.0, 1.0], &[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn breslow_ties_share_the_risk_set() {
        // Both tied events see the risk set {0, 1, 2}.
        let eta = [0.3, -0.2, 0.5];
        let v = neg_log_partial_likelihood(&eta, &[1.0, 1.0, 2.0], &[true, true, false]).unwrap();
        let s: f64 = eta.iter().map(|e: &f64| e.exp()).sum();
        let expected = -(0.3 - s.ln()) - (-0.2 - s.ln());
        assert!((v - expected).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn shift_invariant_and_gradient_matches(
            rows in prop::collection::vec((-3.0f64..3.0, 1u8..6, any::<bool>()), 2..25),
            c in -50.0f64..50.0,
        ) {
            let eta: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let time: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
            let mut event: Vec<bool> = rows.iter().map(|r| r.2).collect();
            event[0] = true;
            let base = neg_log_partial_likelihood(&eta, &time, &event).unwrap();
            let shifted: Vec<f64> = eta.iter().map(|e| e + c).collect();
            let moved = neg_log_partial_likelihood(&shifted, &time, &event).unwrap();
            prop_assert!((base - moved).abs() < 1e-9);

            let (_, g) = nll_and_gradient(&eta, &time, &event).unwrap();
            // Gradient of a shift-invariant function sums to zero.
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-9);
            let h = 1e-5;
            for k in 0..eta.len() {
                let mut up = eta.clone();
                up[k] += h;
                let mut dn = eta.clone();
                dn[k] -= h;
                let fd = (neg_log_partial_likelihood(&up, &time, &event).unwrap()
                    - neg_log_partial_likelihood(&dn, &time, &event).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()));
            }
        }
    }
}
