//! Hosting capacity without an LP, for the unregularized problem.

use crate::risk::{empirical_cvar, RiskSpec};

/// Upper limit of the bracket search when no upper bound is given.
const SEARCH_CEILING: f64 = 1e12;

fn risk_at(p: f64, residual: &[f64], l_hat: &[f64], risk: &RiskSpec) -> f64 {
    let zeta: Vec<f64> =
        residual.iter().zip(l_hat).map(|(dp, l)| (l * p - dp).max(0.0) - risk.rho * l * p).collect();
    empirical_cvar(&zeta, risk.alpha).unwrap_or(f64::INFINITY)
}

/// Largest `P` whose least curtailment schedule `max(0, P l[t] - dP[t])`
/// keeps the empirical CVaR of violations within epsilon.
///
/// The CVaR of that schedule is convex in `P` and zero at `P = 0`, so for
/// `epsilon >= 0` the feasible sizes form an interval starting at zero and
/// bisection finds its end. Returns `None` when `P = 0` is already
/// infeasible, `p_upper` when it is feasible, and infinity when no finite
/// search limit is feasible-bounded.
pub fn hosting_bisection_oracle(residual: &[f64], l_hat: &[f64], risk: &RiskSpec, p_upper: Option<f64>) -> Option<f64> {
    let feasible = |p: f64| risk_at(p, residual, l_hat, risk) <= risk.epsilon;
    if !feasible(0.0) {
        return None;
    }
    let mut hi = match p_upper {
        Some(u) => {
            if feasible(u) {
                return Some(u);
            }
            u
        }
        None => {
            let mut hi = 1.0;
            while feasible(hi) {
                hi *= 2.0;
                if hi > SEARCH_CEILING {
                    return Some(f64::INFINITY);
                }
            }
            hi
        }
    };
    let mut lo = 0.0;
    while hi - lo > 1e-13 * hi.max(1e-3) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
