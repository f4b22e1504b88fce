use serde::{Deserialize, Serialize};

use super::simplex::SimplexQp;
use crate::error::{Error, Result};

/// Penalty multipliers tried (times a scale factor) when the balance
/// constraint is violated at zero penalty.
const PENALTY_STEPS: [f64; 12] = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScWeights {
    pub weights: Vec<f64>,
    /// Pre-period sum of squared fit errors.
    pub pre_sse: f64,
    pub pre_rmspe: f64,
    /// `||X_i - sum_j w_j X_j||`.
    pub balance_gap: f64,
    /// False when the penalty cap was reached without meeting the tolerance.
    pub balance_met: bool,
    pub penalty: f64,
    /// All donors identical; weights are uniform.
    pub degenerate: bool,
}

fn balance_gap(x_treated: &[f64], x_donors: &[Vec<f64>], w: &[f64]) -> f64 {
    (0..x_treated.len())
        .map(|c| {
            let synth: f64 = x_donors.iter().zip(w).map(|(x, w)| w * x[c]).sum();
            (x_treated[c] - synth).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Convex donor weights reproducing the treated pre-period path.
///
/// `donors_pre[j]` is donor j's pre-period outcome path and `x_donors[j]`
/// its covariate vector. Covariate balance `||X_i - sum w_j X_j|| <= tol`
/// is enforced with a quadratic penalty that is escalated until the
/// tolerance holds or the cap is hit; in the latter case the weights are
/// still returned with `balance_met = false`.
pub fn fit_sc_weights(
    treated_pre: &[f64],
    donors_pre: &[Vec<f64>],
    x_treated: &[f64],
    x_donors: &[Vec<f64>],
    balance_tolerance: f64,
) -> Result<ScWeights> {
    let t0 = treated_pre.len();
    let n = donors_pre.len();
    if n == 0 {
        return Err(Error::Dimension("no donors".into()));
    }
    if t0 < 1 || donors_pre.iter().any(|d| d.len() != t0) {
        return Err(Error::Dimension("donor paths must match the treated pre-period".into()));
    }
    if x_donors.len() != n || x_donors.iter().any(|x| x.len() != x_treated.len()) {
        return Err(Error::Dimension("one covariate vector per donor".into()));
    }
    let finite = treated_pre
        .iter()
        .chain(donors_pre.iter().flatten())
        .chain(x_treated)
        .chain(x_donors.iter().flatten())
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("synthetic control inputs".into()));
    }
    if !(balance_tolerance >= 0.0) {
        return Err(Error::Config("balance tolerance must be nonnegative".into()));
    }

    let finish = |w: Vec<f64>, penalty: f64, met: Option<bool>, degenerate: bool| {
        let pre_sse: f64 = (0..t0)
            .map(|t| {
                let s: f64 = donors_pre.iter().zip(&w).map(|(d, w)| w * d[t]).sum();
                (treated_pre[t] - s).powi(2)
            })
            .sum();
        let gap = balance_gap(x_treated, x_donors, &w);
        ScWeights {
            pre_rmspe: (pre_sse / t0 as f64).sqrt(),
            pre_sse,
            balance_gap: gap,
            balance_met: met.unwrap_or(gap <= balance_tolerance),
            penalty,
            degenerate,
            weights: w,
        }
    };

    if n == 1 {
        return Ok(finish(vec![1.0], 0.0, None, false));
    }
    let identical = donors_pre.iter().zip(x_donors).all(|(d, x)| d == &donors_pre[0] && x == &x_donors[0]);
    if identical {
        return Ok(finish(vec![1.0 / n as f64; n], 0.0, None, true));
    }

    let outcome_qp = SimplexQp::from_columns(treated_pre, donors_pre);
    let base = outcome_qp.solve();
    let first = finish(base.weights, 0.0, None, false);
    if first.balance_met || x_treated.is_empty() {
        return Ok(first);
    }

    // Covariate columns: one per donor, entries over covariates.
    let cov_columns: Vec<Vec<f64>> = x_donors.to_vec();
    let balance_qp = SimplexQp::from_columns(x_treated, &cov_columns);
    let scale = {
        let outcome_scale: f64 = donors_pre.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        let cov_scale: f64 = x_donors.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        if cov_scale > 0.0 {
            (outcome_scale / cov_scale).max(1e-8)
        } else {
            1.0
        }
    };
    let mut last = first;
    for step in PENALTY_STEPS {
        let mu = step * scale;
        let sol = outcome_qp.add_scaled(&balance_qp, mu).solve();
        let fit = finish(sol.weights, mu, None, false);
        let met = fit.balance_met;
        last = fit;
        if met {
            return Ok(last);
        }
    }
    last.balance_met = false;
    Ok(last)
}
