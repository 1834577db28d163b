//! Risk-aware hosting capacity: the LP that sizes a flexible load under a
//! CVaR bound on curtailment violations, its sparsity-regularized variant,
//! and the tuning of the regularization weight.
//!
//! At any optimum the curtailment is `max(0, l[t] P - dP[t])`: lowering it
//! further breaks the capacity row, raising it only tightens the risk rows
//! and costs penalty. Solutions are returned in that canonical form.

mod oracle;
mod tune;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::ResidualCapacitySeries;
use crate::lpcore::{solve_lp, LpError, LpProblem, LpRow, LpSolution, LpStatus, SolverSettings};
use crate::risk::{cvar_epigraph_rows, empirical_cvar, empirical_var, violation_series, EpigraphLayout, RiskError, RiskSpec};
use crate::timeseries::FlexibleProfile;

pub use oracle::hosting_bisection_oracle;
pub use tune::{expand_lambda_bracket, tune_lambda, TuneError, TuneOutcome, TuneSettings, TuneStep};

/// Floor substituted when a non-positive weight floor is requested.
pub const MIN_WEIGHT_FLOOR: f64 = 1e-6;
/// Intervention threshold as a fraction of the largest residual capacity.
pub const DEFAULT_TAU_FRACTION: f64 = 1e-6;
/// Horizons up to this length are solved as one LP.
pub const FULL_LP_MAX_INTERVALS: usize = 200;

pub const UNBOUNDED_EXPLANATION: &str = "curtailment can absorb all load; increase λ or lower ρ/ε";

#[derive(Debug, Error)]
pub enum HostingError {
    #[error("baseline infeasible at {} interval(s), first t={}", .intervals.len(), .intervals.first().copied().unwrap_or(0))]
    BaselineInfeasible { intervals: Vec<usize> },
    #[error("residual capacity is nonpositive everywhere")]
    NoPositiveResidual,
    #[error("unbounded: {UNBOUNDED_EXPLANATION}")]
    Unbounded,
    #[error("infeasible: no hosting capacity satisfies the risk bound")]
    Infeasible,
    #[error("LP iteration limit reached")]
    IterationLimit,
    #[error("invalid hosting problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HostingProblemSpec {
    pub residual: ResidualCapacitySeries,
    pub l_hat: FlexibleProfile,
    pub risk: RiskSpec,
    pub lambda: f64,
    /// Normalized curtailment penalty weights in (0, 1].
    pub weights: Vec<f64>,
    pub intervention_target: Option<usize>,
    /// Curtailment above this counts as an intervention.
    pub tau: f64,
}

impl HostingProblemSpec {
    /// Spec with automatic weights and the default intervention threshold.
    pub fn new(residual: ResidualCapacitySeries, l_hat: FlexibleProfile, risk: RiskSpec, lambda: f64) -> Result<Self, HostingError> {
        let w = weights(&residual.values, MIN_WEIGHT_FLOOR)?;
        let max_residual = residual.values.iter().copied().fold(0.0, f64::max);
        let spec = HostingProblemSpec {
            residual,
            l_hat,
            risk,
            lambda,
            weights: w,
            intervention_target: None,
            tau: DEFAULT_TAU_FRACTION * max_residual,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        HostingProblemSpec { lambda, ..self.clone() }
    }

    pub fn horizon(&self) -> usize {
        self.residual.values.len()
    }

    pub fn validate(&self) -> Result<(), HostingError> {
        let t = self.horizon();
        if t == 0 {
            return Err(HostingError::Invalid("empty horizon".into()));
        }
        if self.l_hat.len() != t || self.weights.len() != t {
            return Err(HostingError::Invalid(format!(
                "length mismatch: residual {t}, profile {}, weights {}",
                self.l_hat.len(),
                self.weights.len()
            )));
        }
        if self.l_hat.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(HostingError::Invalid("profile values must lie in [0, 1]".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(HostingError::Invalid("weights must lie in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HostingError::Invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.tau > 0.0) {
            return Err(HostingError::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.residual.values.iter().any(|v| !v.is_finite()) {
            return Err(HostingError::Invalid("residual capacity must be finite".into()));
        }
        self.risk.validate()?;
        Ok(())
    }

    fn check_baseline(&self) -> Result<(), HostingError> {
        let bad: Vec<usize> = (0..self.horizon()).filter(|&t| self.residual.values[t] < 0.0).collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HostingError::BaselineInfeasible { intervals: bad })
        }
    }
}

/// Penalty weights proportional to residual capacity, clamped from below
/// at `floor` times the largest residual and normalized to peak one.
pub fn weights(residual: &[f64], floor: f64) -> Result<Vec<f64>, HostingError> {
    let floor = if floor > 0.0 { floor } else { MIN_WEIGHT_FLOOR };
    let max = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(HostingError::NoPositiveResidual);
    }
    let clamped: Vec<f64> = residual.iter().map(|&r| r.max(floor * max)).collect();
    let peak = clamped.iter().copied().fold(0.0, f64::max);
    Ok(clamped.iter().map(|w| w / peak).collect())
}

/// `|{t : p_curt[t] > tau}|`
pub fn intervention_count(p_curt: &[f64], tau: f64) -> usize {
    p_curt.iter().filter(|&&c| c > tau).count()
}

/// Variables `P, gamma, s[t], p_curt[t]`; rows: capacity per interval,
/// then the CVaR tail rows, then the CVaR budget row.
pub fn assemble_hosting_lp(spec: &HostingProblemSpec) -> Result<LpProblem, HostingError> {
    spec.validate()?;
    spec.check_baseline()?;
    let all: Vec<usize> = (0..spec.horizon()).collect();
    Ok(build_lp(spec, &all, false))
}

/// LP over the intervals in `subset`. With `aggregate_rest`, the remaining
/// intervals have their curtailment fixed at zero and their tail slacks
/// lumped into one variable, which relaxes the full problem.
fn build_lp(spec: &HostingProblemSpec, subset: &[usize], aggregate_rest: bool) -> LpProblem {
    let k = subset.len();
    let inf = f64::INFINITY;
    let mut lp = LpProblem::new();
    lp.add_variable("P", 1.0, 0.0, inf);
    lp.add_variable("gamma", 0.0, -inf, inf);
    for &t in subset {
        lp.add_variable(format!("s[{t}]"), 0.0, 0.0, inf);
    }
    for &t in subset {
        lp.add_variable(format!("p_curt[{t}]"), -spec.lambda * spec.weights[t], 0.0, inf);
    }
    let layout = EpigraphLayout { p: 0, gamma: 1, slack: (2..2 + k).collect(), curtail: (2 + k..2 + 2 * k).collect() };
    let l_sub: Vec<f64> = subset.iter().map(|&t| spec.l_hat.values[t]).collect();

    for (i, &t) in subset.iter().enumerate() {
        lp.add_row(LpRow::le(vec![(0, l_sub[i]), (layout.curtail[i], -1.0)], spec.residual.values[t]));
    }
    let rows = cvar_epigraph_rows(&spec.risk, &l_sub, &layout);
    for row in rows.tail {
        lp.add_row(row);
    }
    let mut budget = rows.budget;
    let w = spec.risk.tail_weight(spec.horizon());
    for c in budget.coefficients.iter_mut().skip(1) {
        c.1 = w;
    }
    if aggregate_rest {
        let mut in_subset = vec![false; spec.horizon()];
        subset.iter().for_each(|&t| in_subset[t] = true);
        let rest: Vec<usize> = (0..spec.horizon()).filter(|&t| !in_subset[t]).collect();
        let l_rest: f64 = rest.iter().map(|&t| spec.l_hat.values[t]).sum();
        let s_rest = lp.add_variable("s_rest", 0.0, 0.0, inf);
        lp.add_row(LpRow::le(vec![(0, -spec.risk.rho * l_rest), (1, -(rest.len() as f64)), (s_rest, -1.0)], 0.0));
        budget.coefficients.push((s_rest, w));
    }
    lp.add_row(budget);
    lp
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// One LP for short horizons, working-set refinement otherwise.
    #[default]
    Auto,
    Full,
    WorkingSet,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HostingOptions {
    pub method: SolveMethod,
    pub solver: SolverSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostingSolution {
    /// Hosting capacity, p.u.
    pub p: f64,
    pub p_curt: Vec<f64>,
    /// `P l[t] - p_curt[t]`
    pub served: Vec<f64>,
    pub gamma: f64,
    pub s: Vec<f64>,
    pub intervention_count: usize,
    pub status: LpStatus,
    /// Empirical CVaR of the realized violation series.
    pub cvar_of_zeta: f64,
    pub var_of_zeta: f64,
    pub zeta: Vec<f64>,
    pub objective: f64,
    pub lambda: f64,
    /// Simplex pivots over all LPs solved.
    pub iterations: usize,
    /// LPs solved (one for the direct path).
    pub rounds: usize,
}

/// Solves the hosting problem with default options.
pub fn solve_hosting(spec: &HostingProblemSpec) -> Result<HostingSolution, HostingError> {
    solve_hosting_with(spec, &HostingOptions::default())
}

pub fn solve_hosting_with(spec: &HostingProblemSpec, options: &HostingOptions) -> Result<HostingSolution, HostingError> {
    spec.validate()?;
    spec.check_baseline()?;
    let t_len = spec.horizon();
    let full = match options.method {
        SolveMethod::Full => true,
        SolveMethod::WorkingSet => false,
        SolveMethod::Auto => t_len <= FULL_LP_MAX_INTERVALS,
    };
    let (p, gamma, iterations, rounds) = if full {
        let lp = build_lp(spec, &(0..t_len).collect::<Vec<_>>(), false);
        let sol = solve_lp(&lp, &options.solver)?;
        check_status(&sol)?;
        (sol.primal[0], sol.primal[1], sol.iterations, 1)
    } else {
        working_set(spec, &options.solver)?
    };
    finish(spec, p, gamma, iterations, rounds)
}

fn check_status(sol: &LpSolution) -> Result<(), HostingError> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(HostingError::Infeasible),
        LpStatus::Unbounded => Err(HostingError::Unbounded),
        LpStatus::IterationLimit => Err(HostingError::IterationLimit),
    }
}

/// Curtailment forced by capacity at size `p`.
fn forced_curtailment(spec: &HostingProblemSpec, p: f64) -> Vec<f64> {
    spec.l_hat.values.iter().zip(&spec.residual.values).map(|(l, r)| (l * p - r).max(0.0)).collect()
}

fn finish(spec: &HostingProblemSpec, p: f64, gamma: f64, iterations: usize, rounds: usize) -> Result<HostingSolution, HostingError> {
    let p = p.max(0.0);
    let l = &spec.l_hat.values;
    let p_curt = forced_curtailment(spec, p);
    let served: Vec<f64> = l.iter().zip(&p_curt).map(|(l, c)| l * p - c).collect();
    let zeta = violation_series(&p_curt, p, l, spec.risk.rho)?.zeta;
    let s = zeta.iter().map(|z| (z - gamma).max(0.0)).collect();
    let penalty: f64 = spec.weights.iter().zip(&p_curt).map(|(w, c)| w * c).sum();
    Ok(HostingSolution {
        p,
        intervention_count: intervention_count(&p_curt, spec.tau),
        served,
        gamma,
        s,
        status: LpStatus::Optimal,
        cvar_of_zeta: empirical_cvar(&zeta, spec.risk.alpha)?,
        var_of_zeta: empirical_var(&zeta, spec.risk.alpha)?,
        zeta,
        objective: p - spec.lambda * penalty,
        lambda: spec.lambda,
        p_curt,
        iterations,
        rounds,
    })
}

/// Row generation over intervals. The subproblem keeps the intervals most
/// likely to matter: those whose capacity binds first and those with the
/// smallest profile values, which carry the largest violations when
/// uncurtailed. Others are fixed uncurtailed; the subproblem relaxes the
/// full LP, so once its solution extends feasibly it is optimal.
fn working_set(spec: &HostingProblemSpec, settings: &SolverSettings) -> Result<(f64, f64, usize, usize), HostingError> {
    let t_len = spec.horizon();
    let l = &spec.l_hat.values;
    let dp = &spec.residual.values;
    let rho = spec.risk.rho;
    let w = spec.risk.tail_weight(t_len);
    let max_dp = dp.iter().copied().fold(0.0, f64::max);
    let tol_cap = 1e-12 * max_dp.max(1.0);
    let tol_budget = 1e-9;

    let ratio = |t: usize| if l[t] > 0.0 { dp[t] / l[t] } else { f64::INFINITY };
    let mut by_ratio: Vec<usize> = (0..t_len).collect();
    by_ratio.sort_by(|&a, &b| ratio(a).total_cmp(&ratio(b)).then(a.cmp(&b)));
    let mut by_profile: Vec<usize> = (0..t_len).collect();
    by_profile.sort_by(|&a, &b| l[a].total_cmp(&l[b]).then(a.cmp(&b)));

    let mut in_set = vec![false; t_len];
    let tail = ((1.0 - spec.risk.alpha) * t_len as f64).ceil() as usize;
    by_ratio.iter().take(16.max(t_len.div_ceil(50))).for_each(|&t| in_set[t] = true);
    by_profile.iter().take(tail + 8.max(tail / 2)).for_each(|&t| in_set[t] = true);

    let mut iterations = 0;
    let mut rounds = 0;
    loop {
        let subset: Vec<usize> = (0..t_len).filter(|&t| in_set[t]).collect();
        let k = subset.len();
        let complete = k == t_len;
        let lp = build_lp(spec, &subset, !complete);
        let sol = solve_lp(&lp, settings)?;
        iterations += sol.iterations;
        rounds += 1;
        debug!("working set round {rounds}: {k} intervals, {} pivots, {}", sol.iterations, sol.status);
        if complete {
            check_status(&sol)?;
            return Ok((sol.primal[0], sol.primal[1], iterations, rounds));
        }
        let batch = 16.max(k / 2);
        let mut additions: Vec<usize> = Vec::new();
        match sol.status {
            LpStatus::Optimal => {
                let (p, gamma) = (sol.primal[0], sol.primal[1]);
                let mut cap = Vec::new();
                let mut excess = Vec::new();
                let mut slack_sum = 0.0;
                for &t in &subset {
                    let c = (l[t] * p - dp[t]).max(0.0);
                    slack_sum += (c - rho * l[t] * p - gamma).max(0.0);
                }
                for t in (0..t_len).filter(|&t| !in_set[t]) {
                    let over = l[t] * p - dp[t];
                    if over > tol_cap {
                        cap.push((over, t));
                    }
                    let st = (-rho * l[t] * p - gamma).max(0.0);
                    if st > 0.0 {
                        slack_sum += st;
                        excess.push((st, t));
                    }
                }
                let budget_ok = gamma + w * slack_sum <= spec.risk.epsilon + tol_budget;
                if cap.is_empty() && budget_ok {
                    return Ok((p, gamma, iterations, rounds));
                }
                if budget_ok {
                    excess.clear();
                }
                cap.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                excess.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let (mut i, mut j) = (0, 0);
                while additions.len() < batch && (i < cap.len() || j < excess.len()) {
                    if i < cap.len() {
                        additions.push(cap[i].1);
                        i += 1;
                    }
                    if j < excess.len() && additions.len() < batch {
                        additions.push(excess[j].1);
                        j += 1;
                    }
                }
            }
            LpStatus::Unbounded => {
                let ray = sol.ray.as_deref().unwrap_or(&[]);
                if spec.risk.epsilon >= 0.0 && ray_extends(spec, &subset, &in_set, ray) {
                    return Err(HostingError::Unbounded);
                }
                additions.extend(by_ratio.iter().copied().filter(|&t| !in_set[t]).take(batch));
            }
            LpStatus::Infeasible => return Err(HostingError::Infeasible),
            LpStatus::IterationLimit => return Err(HostingError::IterationLimit),
        }
        for t in additions {
            in_set[t] = true;
        }
    }
}

/// Whether an improving ray of the subproblem, with every omitted interval
/// curtailing its whole profile, remains an improving ray of the full LP.
fn ray_extends(spec: &HostingProblemSpec, subset: &[usize], in_set: &[bool], ray: &[f64]) -> bool {
    let k = subset.len();
    if ray.len() < 2 + 2 * k {
        return false;
    }
    let (dp, dgamma) = (ray[0], ray[1]);
    let w = spec.risk.tail_weight(spec.horizon());
    let rho = spec.risk.rho;
    let mut budget = dgamma + w * ray[2..2 + k].iter().sum::<f64>();
    let mut objective = dp - spec.lambda * subset.iter().enumerate().map(|(i, &t)| spec.weights[t] * ray[2 + k + i]).sum::<f64>();
    for t in (0..spec.horizon()).filter(|&t| !in_set[t]) {
        let l = spec.l_hat.values[t];
        budget += w * ((1.0 - rho) * l * dp - dgamma).max(0.0);
        objective -= spec.lambda * spec.weights[t] * l * dp;
    }
    budget <= 1e-12 && objective > 1e-12
}
