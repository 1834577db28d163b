//! Parameter sweeps over a study: capacity gain against the intervention
//! budget and the confidence level, and intervention count against the
//! regularization weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hosting::{
    expand_lambda_bracket, solve_hosting_with, tune_lambda, HostingError, HostingOptions, HostingSolution, TuneSettings,
};
use crate::risk::RiskSpec;
use crate::study::{Study, StudyError};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    /// Confidence level for the budget and lambda sweeps.
    pub alpha: f64,
    pub epsilon: f64,
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Intervention budgets as counts of intervals.
    pub budgets: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub tune: TuneSettings,
    /// Bracket doublings allowed when a budget is below the bracket's reach.
    pub max_doublings: usize,
    pub options: HostingOptions,
}

impl SweepSettings {
    /// Budgets at the given fractions of the horizon, rounded to counts.
    pub fn budgets_from_fractions(horizon: usize, fractions: &[f64]) -> Vec<usize> {
        fractions.iter().map(|f| (f * horizon as f64).round() as usize).collect()
    }

    /// `n` points spaced logarithmically from `lo` to `hi`.
    pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    pub fn for_horizon(horizon: usize) -> Self {
        SweepSettings {
            alpha: 0.99,
            epsilon: 0.0,
            rhos: vec![0.0, 0.05, 0.1, 0.2],
            alphas: vec![0.9, 0.95, 0.99],
            budgets: Self::budgets_from_fractions(horizon, &[0.0, 0.001, 0.002, 0.004, 0.006, 0.008, 0.01]),
            lambdas: Self::log_grid(0.01, 100.0, 10),
            tune: TuneSettings::default(),
            max_doublings: 30,
            options: HostingOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub rho: f64,
    pub budget: usize,
    /// Budget as a share of the horizon, percent.
    pub time_pct: f64,
    pub lambda: Option<f64>,
    pub count: Option<usize>,
    pub p: Option<f64>,
    pub gain_pct: Option<f64>,
    pub note: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub rho: f64,
    pub alpha: f64,
    pub count: Option<usize>,
    pub p: Option<f64>,
    pub gain_pct: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub rho: f64,
    pub lambda: f64,
    pub count: Option<usize>,
    pub p: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTables {
    /// Capacity with no flexibility (rho = 0, epsilon = 0), p.u.
    pub p_inflexible: f64,
    pub budget: Vec<BudgetRow>,
    pub alpha: Vec<AlphaRow>,
    pub lambda: Vec<LambdaRow>,
}

pub fn gain_pct(p: f64, reference: f64) -> f64 {
    (p - reference) / reference * 100.0
}

fn solve(study: &Study, risk: RiskSpec, lambda: f64, options: &HostingOptions) -> Result<HostingSolution, StudyError> {
    Ok(solve_hosting_with(&study.hosting_spec(risk, lambda)?, options)?)
}

/// Capacity of the inflexible connection: no curtailment at all.
pub fn inflexible_capacity(study: &Study, alpha: f64, options: &HostingOptions) -> Result<f64, StudyError> {
    let risk = RiskSpec::new(alpha, 0.0, 0.0).map_err(HostingError::from)?;
    Ok(solve(study, risk, 0.0, options)?.p)
}

/// Best capacity whose schedule intervenes in at most `budget` intervals.
pub fn capacity_within_budget(study: &Study, rho: f64, budget: usize, s: &SweepSettings) -> Result<BudgetRow, StudyError> {
    let risk = RiskSpec::new(s.alpha, s.epsilon, rho).map_err(HostingError::from)?;
    let mut spec = study.hosting_spec(risk, 0.0)?;
    let time_pct = budget as f64 / study.horizon() as f64 * 100.0;
    let row = |lambda: f64, sol: &HostingSolution, note: Option<String>| BudgetRow {
        rho,
        budget,
        time_pct,
        lambda: Some(lambda),
        count: Some(sol.intervention_count),
        p: Some(sol.p),
        gain_pct: None,
        note,
        error: None,
    };
    let free = solve_hosting_with(&spec, &s.options)?;
    if free.intervention_count <= budget {
        return Ok(row(0.0, &free, Some("unregularized schedule within budget".into())));
    }
    spec.intervention_target = Some(budget);
    let tune = expand_lambda_bracket(&spec, &s.tune, &s.options, s.max_doublings).map_err(tune_err)?;
    let out = tune_lambda(&spec, &tune, &s.options).map_err(tune_err)?;
    Ok(row(out.lambda, &out.solution, out.note))
}

fn tune_err(e: crate::hosting::TuneError) -> StudyError {
    match e {
        crate::hosting::TuneError::Hosting(h) => StudyError::Hosting(h),
        other => StudyError::Hosting(HostingError::Invalid(other.to_string())),
    }
}

/// Runs the three sweeps. Cells are solved in parallel and tables are
/// assembled in grid order; a failed cell is recorded and the rest go on.
pub fn run_sweeps(study: &Study, s: &SweepSettings) -> Result<SweepTables, StudyError> {
    let p_inflexible = inflexible_capacity(study, s.alpha, &s.options)?;

    let budget_cells: Vec<(f64, usize)> = s.rhos.iter().flat_map(|&r| s.budgets.iter().map(move |&b| (r, b))).collect();
    let budget = budget_cells
        .par_iter()
        .map(|&(rho, b)| match capacity_within_budget(study, rho, b, s) {
            Ok(mut row) => {
                row.gain_pct = row.p.map(|p| gain_pct(p, p_inflexible));
                row
            }
            Err(e) => BudgetRow {
                rho,
                budget: b,
                time_pct: b as f64 / study.horizon() as f64 * 100.0,
                lambda: None,
                count: None,
                p: None,
                gain_pct: None,
                note: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let alpha_cells: Vec<(f64, f64)> = s.rhos.iter().flat_map(|&r| s.alphas.iter().map(move |&a| (r, a))).collect();
    let alpha = alpha_cells
        .par_iter()
        .map(|&(rho, a)| {
            let res = RiskSpec::new(a, s.epsilon, rho)
                .map_err(|e| StudyError::Hosting(e.into()))
                .and_then(|risk| solve(study, risk, 0.0, &s.options));
            match res {
                Ok(sol) => AlphaRow {
                    rho,
                    alpha: a,
                    count: Some(sol.intervention_count),
                    p: Some(sol.p),
                    gain_pct: Some(gain_pct(sol.p, p_inflexible)),
                    error: None,
                },
                Err(e) => AlphaRow { rho, alpha: a, count: None, p: None, gain_pct: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    let lambda_cells: Vec<(f64, f64)> = s.rhos.iter().flat_map(|&r| s.lambdas.iter().map(move |&l| (r, l))).collect();
    let lambda = lambda_cells
        .par_iter()
        .map(|&(rho, lam)| {
            let res = RiskSpec::new(s.alpha, s.epsilon, rho)
                .map_err(|e| StudyError::Hosting(e.into()))
                .and_then(|risk| solve(study, risk, lam, &s.options));
            match res {
                Ok(sol) => LambdaRow { rho, lambda: lam, count: Some(sol.intervention_count), p: Some(sol.p), error: None },
                Err(e) => LambdaRow { rho, lambda: lam, count: None, p: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    Ok(SweepTables { p_inflexible, budget, alpha, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{synthetic_study, SyntheticStudyParams};

    #[test]
    fn grids() {
        assert_eq!(SweepSettings::budgets_from_fractions(2688, &[0.0, 0.001, 0.01]), vec![0, 3, 27]);
        let g = SweepSettings::log_grid(0.01, 100.0, 5);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn small_sweep_tables_are_ordered_and_complete() {
        let study = synthetic_study(&SyntheticStudyParams { horizon: 96 * 4, ..Default::default() }).unwrap();
        let mut s = SweepSettings::for_horizon(study.horizon());
        s.rhos = vec![0.0, 0.1];
        s.budgets = vec![0, 2, 4];
        let t = run_sweeps(&study, &s).unwrap();
        assert_eq!(t.budget.len(), 6);
        assert_eq!(t.alpha.len(), 6);
        assert_eq!(t.lambda.len(), 20);
        assert_eq!((t.budget[3].rho, t.budget[3].budget), (0.1, 0));
        for row in &t.budget {
            assert!(row.error.is_none(), "{row:?}");
            assert!(row.count.unwrap() <= row.budget);
        }
        assert!(t.budget[0].gain_pct.unwrap().abs() < 1e-6);
    }
}
