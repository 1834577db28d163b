//! Bisection on the regularization weight to meet an intervention target.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{solve_hosting_with, HostingError, HostingOptions, HostingProblemSpec, HostingSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_iterations: usize,
    /// Accepted distance between achieved and target counts.
    pub eps_n: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings { lambda_min: 0.0, lambda_max: 2.0, max_iterations: 40, eps_n: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub lambda: f64,
    /// `None` when the solve was unbounded.
    pub count: Option<usize>,
    pub p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub lambda: f64,
    pub solution: HostingSolution,
    pub history: Vec<TuneStep>,
    /// The stopping rule fired before the iteration limit.
    pub converged: bool,
    /// Set when the target sits inside a jump of the count staircase.
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("no intervention target set")]
    NoTarget,
    #[error("invalid bracket [{0}, {1}]")]
    BadBracket(f64, f64),
    #[error("target {target} not reached: {count} interventions at lambda_max = {lambda_max}")]
    Unreachable { target: usize, count: usize, lambda_max: f64 },
    #[error(transparent)]
    Hosting(#[from] HostingError),
}

fn solve_at(spec: &HostingProblemSpec, lambda: f64, options: &HostingOptions) -> Result<Option<HostingSolution>, HostingError> {
    match solve_hosting_with(&spec.with_lambda(lambda), options) {
        Ok(sol) => Ok(Some(sol)),
        Err(HostingError::Unbounded) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Algorithm: solve at the bracket midpoint; stop once the count is within
/// `eps_n` of the target; otherwise move `lambda_min` up when there are too
/// many interventions and `lambda_max` down when there are too few. Returns
/// the largest capacity seen among schedules with at most `target + eps_n`
/// interventions.
pub fn tune_lambda(spec: &HostingProblemSpec, settings: &TuneSettings, options: &HostingOptions) -> Result<TuneOutcome, TuneError> {
    let target = spec.intervention_target.ok_or(TuneError::NoTarget)?;
    let (mut lo, mut hi) = (settings.lambda_min, settings.lambda_max);
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(TuneError::BadBracket(lo, hi));
    }
    let ceiling = target + settings.eps_n;
    let mut history: Vec<TuneStep> = Vec::new();
    let mut best: Option<(f64, HostingSolution)> = None;
    let consider = |best: &mut Option<(f64, HostingSolution)>, lambda: f64, sol: &HostingSolution| {
        // equal capacities (to rounding) prefer the smaller weight
        let better = |(bl, b): &(f64, HostingSolution)| {
            let tol = 1e-12 * b.p.abs().max(1.0);
            sol.p > b.p + tol || (sol.p >= b.p - tol && lambda < *bl)
        };
        if sol.intervention_count <= ceiling && best.as_ref().is_none_or(better) {
            *best = Some((lambda, sol.clone()));
        }
    };

    for _ in 0..settings.max_iterations {
        let lambda = 0.5 * (lo + hi);
        let sol = solve_at(spec, lambda, options)?;
        let count = sol.as_ref().map(|s| s.intervention_count);
        debug!("lambda {lambda:.6e}: count {count:?}");
        if let Some(c) = count {
            let out_of_order = history.iter().any(|h| {
                h.count.is_some_and(|hc| (h.lambda < lambda && hc < c) || (h.lambda > lambda && hc > c))
            });
            if out_of_order {
                warn!("intervention count {c} at lambda {lambda:.6e} breaks monotonicity");
            }
        }
        history.push(TuneStep { lambda, count, p: sol.as_ref().map(|s| s.p) });
        match sol {
            Some(sol) => {
                consider(&mut best, lambda, &sol);
                let c = sol.intervention_count;
                if c.abs_diff(target) <= settings.eps_n {
                    return Ok(TuneOutcome { lambda, solution: sol, history, converged: true, note: None });
                }
                if c > target {
                    lo = lambda;
                } else {
                    hi = lambda;
                }
            }
            None => lo = lambda,
        }
    }

    if best.is_none() {
        let lambda = settings.lambda_max;
        let sol = solve_at(spec, lambda, options)?;
        let count = sol.as_ref().map(|s| s.intervention_count);
        history.push(TuneStep { lambda, count, p: sol.as_ref().map(|s| s.p) });
        match sol {
            Some(sol) if sol.intervention_count <= ceiling => best = Some((lambda, sol)),
            _ => {
                return Err(TuneError::Unreachable { target, count: count.unwrap_or(usize::MAX), lambda_max: lambda });
            }
        }
    }
    let (lambda, solution) = best.expect("set above");
    let note = Some(format!(
        "no lambda in the bracket gives {target} interventions; closest achievable at or below the target is {}",
        solution.intervention_count
    ));
    Ok(TuneOutcome { lambda, solution, history, converged: false, note })
}

/// Doubles `lambda_max` until the schedule there has at most
/// `target + eps_n` interventions, moving `lambda_min` up along the way.
pub fn expand_lambda_bracket(
    spec: &HostingProblemSpec,
    settings: &TuneSettings,
    options: &HostingOptions,
    max_doublings: usize,
) -> Result<TuneSettings, TuneError> {
    let target = spec.intervention_target.ok_or(TuneError::NoTarget)?;
    let mut out = *settings;
    for _ in 0..=max_doublings {
        match solve_at(spec, out.lambda_max, options)? {
            Some(sol) if sol.intervention_count <= target + settings.eps_n => return Ok(out),
            Some(sol) if out.lambda_max * 2.0 > f64::MAX / 4.0 => {
                return Err(TuneError::Unreachable { target, count: sol.intervention_count, lambda_max: out.lambda_max })
            }
            _ => {
                out.lambda_min = out.lambda_max;
                out.lambda_max *= 2.0;
            }
        }
    }
    let count = solve_at(spec, out.lambda_max, options)?.map_or(usize::MAX, |s| s.intervention_count);
    Err(TuneError::Unreachable { target, count, lambda_max: out.lambda_max })
}
