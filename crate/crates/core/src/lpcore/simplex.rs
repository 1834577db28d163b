//! Two-phase primal simplex on a dense bounded-variable tableau.
//!
//! Every row gets a slack column (`[0, inf)` for `<=`, `[0, 0]` for `=`), so
//! the tableau always holds `B^-1 [A | I | Art]`. Rows whose slack cannot
//! start feasible get an artificial column, and phase 1 maximizes minus
//! their sum. Free variables stay in the model as columns with infinite
//! bounds and sit at zero while nonbasic.
//!
//! Pricing is Dantzig's largest reduced cost. After
//! `SolverSettings::degeneracy_streak` consecutive degenerate steps the
//! solver switches to Bland's smallest-index rule for both the entering and
//! the leaving choice, and switches back after the next step that moves.

use log::{debug, warn};

use super::{LpError, LpProblem, LpSolution, LpStatus, Relation, SolverSettings};

/// Smallest pivot magnitude accepted by the ratio test.
const PIVOT_TOL: f64 = 1e-9;
/// A step shorter than this counts as degenerate.
const DEGENERATE_STEP: f64 = 1e-12;
/// Pivot-row entries below this are flushed to zero.
const DROP_TOL: f64 = 1e-14;

enum PhaseEnd {
    Optimal,
    Unbounded(Vec<f64>),
    IterationLimit,
}

struct Tableau<'a> {
    problem: &'a LpProblem,
    m: usize,
    n: usize,
    ncols: usize,
    first_art: usize,
    tab: Vec<f64>,
    x: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    /// Column that was basic in each row initially and its sign, so that
    /// `B^-1 e_i = sign_i * tab[:, col_i]`.
    init_col: Vec<usize>,
    init_sign: Vec<f64>,
    art_sign: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    bland_engaged: bool,
}

/// Solves `problem` (a maximization) and reports status, primal values and
/// diagnostics. Only malformed input is an `Err`; infeasible, unbounded and
/// iteration-limited outcomes are statuses.
pub fn solve_lp(problem: &LpProblem, settings: &SolverSettings) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let mut t = Tableau::build(problem);
    let limit = settings.max_iterations.unwrap_or(50 * (t.m + t.n));

    if t.ncols > t.first_art {
        let mut cost = vec![0.0; t.ncols];
        cost[t.first_art..].iter_mut().for_each(|c| *c = -1.0);
        match t.run_phase(&cost, settings, limit, false) {
            PhaseEnd::Optimal => {}
            PhaseEnd::IterationLimit => return Ok(t.finish(LpStatus::IterationLimit, None)),
            PhaseEnd::Unbounded(_) => unreachable!("phase 1 objective is bounded by zero"),
        }
        t.refine_basic_values();
        let residual: f64 = (t.first_art..t.ncols).map(|j| t.x[j].abs()).sum();
        let scale = 1.0 + problem.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if residual > 10.0 * settings.tol_feas * scale {
            debug!("phase 1 ended with artificial sum {residual:e}");
            return Ok(t.finish(LpStatus::Infeasible, None));
        }
        t.retire_artificials();
    }

    let mut cost = vec![0.0; t.ncols];
    cost[..t.n].copy_from_slice(&problem.objective);
    let end = t.run_phase(&cost, settings, limit, true);
    t.refine_basic_values();
    Ok(match end {
        PhaseEnd::Optimal => t.finish(LpStatus::Optimal, None),
        PhaseEnd::Unbounded(ray) => t.finish(LpStatus::Unbounded, Some(ray)),
        PhaseEnd::IterationLimit => {
            warn!("simplex stopped at the iteration limit ({limit}) after {} steps", t.iterations);
            t.finish(LpStatus::IterationLimit, None)
        }
    })
}

impl<'a> Tableau<'a> {
    fn build(problem: &'a LpProblem) -> Self {
        let n = problem.num_variables();
        let m = problem.num_rows();

        let mut x = vec![0.0; n + m];
        let mut lb = Vec::with_capacity(n + m);
        let mut ub = Vec::with_capacity(n + m);
        for j in 0..n {
            let (lo, hi) = (problem.lower[j], problem.upper[j]);
            x[j] = if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
            lb.push(lo);
            ub.push(hi);
        }
        for row in &problem.rows {
            lb.push(0.0);
            ub.push(match row.relation {
                Relation::Le => f64::INFINITY,
                Relation::Eq => 0.0,
            });
        }

        // Residual b - A x_N decides whether the slack can start basic.
        let mut needs_art = Vec::new();
        let mut residual = vec![0.0; m];
        for (i, row) in problem.rows.iter().enumerate() {
            let r = row.rhs - row.activity(&x[..n]);
            residual[i] = r;
            let slack_ok = match row.relation {
                Relation::Le => r >= 0.0,
                Relation::Eq => r == 0.0,
            };
            if slack_ok {
                x[n + i] = r;
            } else {
                needs_art.push(i);
            }
        }

        let first_art = n + m;
        let ncols = first_art + needs_art.len();
        let mut art_sign = Vec::with_capacity(needs_art.len());
        let mut init_col: Vec<usize> = (0..m).map(|i| n + i).collect();
        let mut init_sign = vec![1.0; m];
        for (k, &i) in needs_art.iter().enumerate() {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            art_sign.push(sign);
            init_col[i] = first_art + k;
            init_sign[i] = sign;
            x[n + i] = 0.0;
            x.push(residual[i].abs());
            lb.push(0.0);
            ub.push(f64::INFINITY);
        }

        let mut tab = vec![0.0; m * ncols];
        for (i, row) in problem.rows.iter().enumerate() {
            let base = i * ncols;
            let s = init_sign[i];
            for &(j, a) in &row.coefficients {
                tab[base + j] += s * a;
            }
            tab[base + n + i] = s;
        }
        for (k, &i) in needs_art.iter().enumerate() {
            // sign * sign == 1 on the artificial's own entry
            tab[i * ncols + first_art + k] = 1.0;
        }

        let basis = init_col.clone();
        let mut row_of = vec![None; ncols];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = Some(i);
        }

        Tableau {
            problem,
            m,
            n,
            ncols,
            first_art,
            tab,
            x,
            lb,
            ub,
            basis,
            row_of,
            init_col,
            init_sign,
            art_sign,
            d: vec![0.0; ncols],
            iterations: 0,
            bland_engaged: false,
        }
    }

    fn compute_reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.tab[r * self.ncols..(r + 1) * self.ncols];
                for (d, &a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Chooses an entering column and its direction of travel.
    fn price(&self, tol_opt: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j].is_some() || self.lb[j] == self.ub[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj > tol_opt && self.x[j] < self.ub[j] {
                1.0
            } else if dj < -tol_opt && self.x[j] > self.lb[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn run_phase(&mut self, cost: &[f64], settings: &SolverSettings, limit: usize, phase_two: bool) -> PhaseEnd {
        self.compute_reduced_costs(cost);
        let mut streak = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= limit {
                return PhaseEnd::IterationLimit;
            }
            let Some((q, dir)) = self.price(settings.tol_opt, bland) else {
                return PhaseEnd::Optimal;
            };

            // Ratio test: the row that blocks first, with ties broken by the
            // larger pivot (or the smaller basic index under Bland).
            let mut theta_row = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_mag = 0.0;
            for r in 0..self.m {
                let a = self.tab[r * self.ncols + q];
                let s = dir * a;
                let b = self.basis[r];
                let (ratio, to_upper) = if s > PIVOT_TOL && self.lb[b].is_finite() {
                    (((self.x[b] - self.lb[b]) / s).max(0.0), false)
                } else if s < -PIVOT_TOL && self.ub[b].is_finite() {
                    (((self.ub[b] - self.x[b]) / -s).max(0.0), true)
                } else {
                    continue;
                };
                let tie = 1e-12 * (1.0 + theta_row.min(1e12));
                let better = match leave {
                    None => true,
                    Some((lr, _)) if (ratio - theta_row).abs() <= tie => {
                        if bland {
                            b < self.basis[lr]
                        } else {
                            a.abs() > leave_mag
                        }
                    }
                    Some(_) => ratio < theta_row,
                };
                if better {
                    theta_row = ratio;
                    leave = Some((r, to_upper));
                    leave_mag = a.abs();
                }
            }
            let theta_flip = self.ub[q] - self.lb[q];

            if leave.is_none() && !theta_flip.is_finite() {
                if !phase_two {
                    unreachable!("phase 1 cannot be unbounded");
                }
                return PhaseEnd::Unbounded(self.ray(q, dir));
            }

            let flip = theta_flip <= theta_row;
            let theta = if flip { theta_flip } else { theta_row };
            self.iterations += 1;

            if theta <= DEGENERATE_STEP {
                streak += 1;
                if streak >= settings.degeneracy_streak && !bland {
                    debug!("degenerate streak of {streak}; switching to Bland's rule");
                    bland = true;
                    self.bland_engaged = true;
                }
            } else {
                streak = 0;
                bland = false;
            }

            if theta > 0.0 {
                self.x[q] += dir * theta;
                for r in 0..self.m {
                    let a = self.tab[r * self.ncols + q];
                    if a != 0.0 {
                        self.x[self.basis[r]] -= dir * a * theta;
                    }
                }
            }
            if flip {
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                continue;
            }
            let (r, to_upper) = leave.expect("finite row ratio");
            let b = self.basis[r];
            self.x[b] = if to_upper { self.ub[b] } else { self.lb[b] };
            self.pivot(r, q);
        }
    }

    fn ray(&self, q: usize, dir: f64) -> Vec<f64> {
        let mut ray = vec![0.0; self.n];
        if q < self.n {
            ray[q] = dir;
        }
        for r in 0..self.m {
            let b = self.basis[r];
            if b < self.n {
                ray[b] = -dir * self.tab[r * self.ncols + q];
            }
        }
        ray
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.tab[r * nc + q];
        let mut prow: Vec<f64> = self.tab[r * nc..(r + 1) * nc].iter().map(|v| v / piv).collect();
        let mut nz = Vec::new();
        for (j, v) in prow.iter_mut().enumerate() {
            if v.abs() < DROP_TOL {
                *v = 0.0;
            } else {
                nz.push(j);
            }
        }
        prow[q] = 1.0;

        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * nc..(i + 1) * nc];
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
        }
        self.d[q] = 0.0;
        self.tab[r * nc..(r + 1) * nc].copy_from_slice(&prow);

        let old = self.basis[r];
        self.row_of[old] = None;
        self.row_of[q] = Some(r);
        self.basis[r] = q;
    }

    /// Pivots zero-valued artificials out of the basis and fixes all
    /// artificial columns at zero. An artificial that cannot leave marks a
    /// redundant equality and stays basic at zero.
    fn retire_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.first_art {
                continue;
            }
            let row = &self.tab[r * self.ncols..(r + 1) * self.ncols];
            let mut best: Option<usize> = None;
            let mut mag = 1e-7;
            for j in 0..self.first_art {
                if self.row_of[j].is_none() && row[j].abs() > mag {
                    mag = row[j].abs();
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                let art = self.basis[r];
                self.x[art] = 0.0;
                self.pivot(r, q);
            }
        }
        for j in self.first_art..self.ncols {
            self.ub[j] = 0.0;
            if self.row_of[j].is_none() {
                self.x[j] = 0.0;
            }
        }
        self.refine_basic_values();
    }

    /// Recomputes basic values as `B^-1 (b - N x_N)` to shed drift from the
    /// incremental updates.
    fn refine_basic_values(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut rhs: Vec<f64> = self.problem.rows.iter().map(|r| r.rhs).collect();
        for (i, row) in self.problem.rows.iter().enumerate() {
            for &(j, a) in &row.coefficients {
                if self.row_of[j].is_none() {
                    rhs[i] -= a * self.x[j];
                }
            }
            if self.row_of[n + i].is_none() {
                rhs[i] -= self.x[n + i];
            }
        }
        for (k, j) in (self.first_art..self.ncols).enumerate() {
            if self.row_of[j].is_none() && self.x[j] != 0.0 {
                let i = self.init_col.iter().position(|&c| c == j).expect("artificial row");
                rhs[i] -= self.art_sign[k] * self.x[j];
            }
        }
        for r in 0..m {
            let row = &self.tab[r * self.ncols..(r + 1) * self.ncols];
            let mut v = 0.0;
            for i in 0..m {
                let binv = self.init_sign[i] * row[self.init_col[i]];
                if binv != 0.0 {
                    v += binv * rhs[i];
                }
            }
            self.x[self.basis[r]] = v;
        }
    }

    fn finish(&self, status: LpStatus, ray: Option<Vec<f64>>) -> LpSolution {
        let primal = self.x[..self.n].to_vec();
        LpSolution {
            status,
            objective: self.problem.objective_value(&primal),
            max_violation: self.problem.max_violation(&primal),
            primal,
            iterations: self.iterations,
            ray,
            bland_engaged: self.bland_engaged,
        }
    }
}
