//! Dense bounded-variable linear programming.
//!
//! Problems are stated as *maximize* `c'x` subject to sparse rows
//! `a_i'x {<=,=} b_i` and per-variable bounds `l <= x <= u`, where either
//! bound may be infinite. [`solve_lp`] runs a two-phase primal simplex on a
//! dense tableau; see [`simplex`] for the details.

mod simplex;

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::solve_lp;

/// Row sense. `>=` rows are written by negating the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    /// Sparse `(variable index, coefficient)` pairs. Repeated indices are summed.
    pub coefficients: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LpRow {
    pub fn le(coefficients: Vec<(usize, f64)>, rhs: f64) -> Self {
        LpRow { coefficients, relation: Relation::Le, rhs }
    }

    pub fn eq(coefficients: Vec<(usize, f64)>, rhs: f64) -> Self {
        LpRow { coefficients, relation: Relation::Eq, rhs }
    }

    /// `a'x` for a dense point.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program in maximization form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    #[serde(with = "lower_bounds")]
    pub lower: Vec<f64>,
    #[serde(with = "upper_bounds")]
    pub upper: Vec<f64>,
    pub names: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("problem has no variables")]
    NoVariables,
    #[error("variable vectors disagree in length: {0}")]
    ShapeMismatch(String),
    #[error("row {row} references variable {index}, but only {count} exist")]
    IndexOutOfRange { row: usize, index: usize, count: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_variable(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, row: LpRow) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if n == 0 {
            return Err(LpError::NoVariables);
        }
        if self.lower.len() != n || self.upper.len() != n || self.names.len() != n {
            return Err(LpError::ShapeMismatch(format!(
                "objective {n}, lower {}, upper {}, names {}",
                self.lower.len(),
                self.upper.len(),
                self.names.len()
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(format!("objective coefficient of {}", self.names[j])));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi {
                return Err(LpError::InvertedBounds { name: self.names[j].clone(), lower: lo, upper: hi });
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("right-hand side of row {i}")));
            }
            for &(j, a) in &row.coefficients {
                if j >= n {
                    return Err(LpError::IndexOutOfRange { row: i, index: j, count: n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("row {i}, variable {}", self.names[j])));
                }
            }
        }
        Ok(())
    }

    /// Writes the problem as JSON for offline inspection.
    pub fn write_debug_dump(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        file.flush()
    }
}

// JSON has no infinity; infinite bounds are written as null.
mod lower_bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

mod upper_bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Row and bound feasibility tolerance.
    pub tol_feas: f64,
    /// Reduced-cost optimality tolerance.
    pub tol_opt: f64,
    /// Pivot limit; `None` means `50 * (rows + columns)`.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degeneracy_streak: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol_feas: 1e-9, tol_opt: 1e-9, max_iterations: None, degeneracy_streak: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Values of the structural variables. For `Unbounded` this is the vertex
    /// at which the improving ray was found.
    pub primal: Vec<f64>,
    pub iterations: usize,
    /// Improving recession direction, present only when `Unbounded`.
    pub ray: Option<Vec<f64>>,
    /// Whether the Bland fallback was engaged at any point.
    pub bland_engaged: bool,
    /// Largest row/bound violation of `primal` against the original problem.
    pub max_violation: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
