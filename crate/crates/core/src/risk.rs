//! Empirical VaR/CVaR of curtailment violations and the linear CVaR
//! epigraph used by the hosting LP.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpcore::LpRow;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("empty sample series")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
    #[error("rho must lie in [0, 1], got {0}")]
    Rho(f64),
    #[error("epsilon must be finite, got {0}")]
    Epsilon(f64),
    #[error("non-finite sample at t={0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    /// Confidence level in (0, 1).
    pub alpha: f64,
    /// Allowed CVaR of the violation series, p.u. May be negative.
    pub epsilon: f64,
    /// Share of the new load that may be curtailed without counting as a violation.
    pub rho: f64,
}

impl RiskSpec {
    pub fn new(alpha: f64, epsilon: f64, rho: f64) -> Result<Self, RiskError> {
        let spec = RiskSpec { alpha, epsilon, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RiskError::Alpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(RiskError::Rho(self.rho));
        }
        if !self.epsilon.is_finite() {
            return Err(RiskError::Epsilon(self.epsilon));
        }
        Ok(())
    }

    /// Weight `1/((1-alpha) T)` of each tail slack in the budget row.
    pub fn tail_weight(&self, horizon: usize) -> f64 {
        1.0 / ((1.0 - self.alpha) * horizon as f64)
    }
}

/// Curtailment in excess of the tolerated share, per interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationSeries {
    pub zeta: Vec<f64>,
}

pub fn violation_series(p_curt: &[f64], p: f64, l_hat: &[f64], rho: f64) -> Result<ViolationSeries, RiskError> {
    if p_curt.len() != l_hat.len() {
        return Err(RiskError::LengthMismatch(p_curt.len(), l_hat.len()));
    }
    Ok(ViolationSeries { zeta: p_curt.iter().zip(l_hat).map(|(c, l)| c - rho * p * l).collect() })
}

fn check_samples(samples: &[f64], alpha: f64) -> Result<(), RiskError> {
    if samples.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(RiskError::Alpha(alpha));
    }
    match samples.iter().position(|v| !v.is_finite()) {
        Some(t) => Err(RiskError::NonFinite(t)),
        None => Ok(()),
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `min_g g + sum(max(0, x - g)) / ((1 - alpha) T)`, evaluated exactly at
/// every sample value.
pub fn empirical_cvar(samples: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check_samples(samples, alpha)?;
    let s = sorted(samples);
    let t = s.len();
    let w = 1.0 / ((1.0 - alpha) * t as f64);
    // suffix[k] = sum of s[k..]
    let mut suffix = vec![0.0; t + 1];
    for k in (0..t).rev() {
        suffix[k] = suffix[k + 1] + s[k];
    }
    let mut best = f64::INFINITY;
    for k in 0..t {
        let g = s[k];
        let excess = suffix[k + 1] - (t - k - 1) as f64 * g;
        best = best.min(g + w * excess);
    }
    Ok(best)
}

/// Number of samples that must lie at or below the alpha-quantile.
fn quantile_count(alpha: f64, t: usize) -> usize {
    // guard against alpha*T landing a hair above an integer
    ((alpha * t as f64 - 1e-9).ceil() as usize).clamp(1, t)
}

/// Smallest sample `v` with at least `ceil(alpha T)` samples `<= v`.
pub fn empirical_var(samples: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check_samples(samples, alpha)?;
    let s = sorted(samples);
    Ok(s[quantile_count(alpha, s.len()) - 1])
}

/// Step points `(value, fraction of samples <= value)` of the empirical CDF.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(samples);
    let t = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in s.iter().enumerate() {
        let frac = (k + 1) as f64 / t;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

/// Column positions of the epigraph variables.
#[derive(Clone, Debug, PartialEq)]
pub struct EpigraphLayout {
    pub p: usize,
    pub gamma: usize,
    pub slack: Vec<usize>,
    pub curtail: Vec<usize>,
}

impl EpigraphLayout {
    /// `P, gamma, s[0..T], p_curt[0..T]` in that order.
    pub fn contiguous(horizon: usize) -> Self {
        EpigraphLayout {
            p: 0,
            gamma: 1,
            slack: (2..2 + horizon).collect(),
            curtail: (2 + horizon..2 + 2 * horizon).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpigraphRows {
    /// `p_curt[t] - rho l[t] P - gamma - s[t] <= 0`, one per interval.
    pub tail: Vec<LpRow>,
    /// `gamma + w sum(s) <= epsilon`.
    pub budget: LpRow,
    pub tail_weight: f64,
}

/// Linear rows whose feasible set bounds the CVaR of the violation series
/// by epsilon. Slacks must be constrained nonnegative by the caller and
/// gamma left free.
pub fn cvar_epigraph_rows(spec: &RiskSpec, l_hat: &[f64], layout: &EpigraphLayout) -> EpigraphRows {
    let horizon = l_hat.len();
    let w = spec.tail_weight(horizon);
    let tail = (0..horizon)
        .map(|t| {
            LpRow::le(
                vec![(layout.curtail[t], 1.0), (layout.p, -spec.rho * l_hat[t]), (layout.gamma, -1.0), (layout.slack[t], -1.0)],
                0.0,
            )
        })
        .collect();
    let mut budget = vec![(layout.gamma, 1.0)];
    budget.extend(layout.slack.iter().map(|&s| (s, w)));
    EpigraphRows { tail, budget: LpRow::le(budget, spec.epsilon), tail_weight: w }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_cvar(x: &[f64], alpha: f64) -> f64 {
        let w = 1.0 / ((1.0 - alpha) * x.len() as f64);
        x.iter()
            .map(|&g| g + w * x.iter().map(|&v| (v - g).max(0.0)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn violation_examples() {
        assert_eq!(violation_series(&[0.0, 0.0], 3.0, &[1.0, 0.5], 0.0).unwrap().zeta, vec![0.0, 0.0]);
        let z = violation_series(&[0.2, 0.0], 1.0, &[1.0, 1.0], 0.1).unwrap().zeta;
        assert!((z[0] - 0.1).abs() < 1e-15 && (z[1] + 0.1).abs() < 1e-15);
        assert_eq!(violation_series(&[0.5, 0.25], 1.0, &[0.5, 0.25], 1.0).unwrap().zeta, vec![0.0, 0.0]);
        assert!(violation_series(&[0.0], 1.0, &[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(empirical_cvar(&[1.0, 2.0, 3.0, 4.0], 0.75).unwrap(), 4.0);
        assert_eq!(brute_cvar(&[1.0, 2.0, 3.0, 4.0], 0.75), 4.0);
        for a in [0.0, 0.3, 0.9, 0.99] {
            assert!((empirical_cvar(&[2.5; 7], a).unwrap() - 2.5).abs() < 1e-12);
        }
        assert!((empirical_cvar(&[1.0, 5.0, 3.0], 0.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(empirical_cvar(&[], 0.5), Err(RiskError::Empty));
        assert_eq!(empirical_cvar(&[0.1, 0.7, 0.3], 0.99).unwrap(), 0.7);
    }

    #[test]
    fn var_examples() {
        assert_eq!(empirical_var(&[4.0, 2.0, 1.0, 3.0], 0.75).unwrap(), 3.0);
        assert_eq!(empirical_var(&[1.5; 3], 0.5).unwrap(), 1.5);
        assert_eq!(empirical_var(&[1.0, 9.0, 4.0, 2.0], 0.7501).unwrap(), 9.0);
        assert_eq!(empirical_var(&[1.0, 9.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_steps() {
        assert_eq!(empirical_cdf(&[2.0, 1.0, 2.0, 3.0]), vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    }

    #[test]
    fn epigraph_coefficients() {
        let coef = |t: usize, alpha: f64| {
            let spec = RiskSpec::new(alpha, 0.0, 0.1).unwrap();
            let rows = cvar_epigraph_rows(&spec, &vec![1.0; t], &EpigraphLayout::contiguous(t));
            assert_eq!(rows.tail.len(), t);
            rows.budget.coefficients[1].1
        };
        assert_eq!(coef(1, 0.5), 2.0);
        assert_eq!(coef(4, 0.75), 1.0);
        assert!((coef(3, 0.99) - 100.0 / 3.0).abs() < 1e-9);

        let spec = RiskSpec::new(0.9, 0.05, 0.2).unwrap();
        let rows = cvar_epigraph_rows(&spec, &[0.5, 1.0], &EpigraphLayout::contiguous(2));
        assert_eq!(rows.tail[0].coefficients, vec![(4, 1.0), (0, -0.1), (1, -1.0), (2, -1.0)]);
        assert_eq!(rows.budget.rhs, 0.05);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(RiskSpec::new(1.0, 0.0, 0.1), Err(RiskError::Alpha(1.0)));
        assert_eq!(RiskSpec::new(0.9, 0.0, 1.5), Err(RiskError::Rho(1.5)));
        assert!(RiskSpec::new(0.9, -0.1, 0.0).is_ok());
    }
}
