//! LinDistFlow voltages, line flows and residual hosting capacity.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{BusId, FeederError, FeederNetwork, ImpedanceMatrices};
use crate::timeseries::{FlexibleProfile, LoadDataset};

/// Buses whose sensitivity to the new load is at or below this are left
/// out of the voltage headroom minimum.
pub const COUPLING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("connection bus {0} is not a load bus of the feeder")]
    UnknownConnectionBus(BusId),
    #[error("load table columns do not match the feeder buses")]
    BusOrderMismatch,
    #[error(transparent)]
    Feeder(#[from] FeederError),
}

fn check_len(expected: usize, got: usize) -> Result<(), CapacityError> {
    if expected == got {
        Ok(())
    } else {
        Err(CapacityError::DimensionMismatch { expected, got })
    }
}

/// Squared bus voltages `v0 - 2Rp - 2Xq`, in bus order.
pub fn voltages(network: &FeederNetwork, m: &ImpedanceMatrices, p: &[f64], q: &[f64]) -> Result<Vec<f64>, CapacityError> {
    let n = m.r.nrows();
    check_len(n, p.len())?;
    check_len(n, q.len())?;
    let v0 = network.substation.v0_squared;
    Ok((0..n)
        .map(|j| {
            let drop: f64 = (0..n).map(|k| m.r[(j, k)] * p[k] + m.x[(j, k)] * q[k]).sum();
            v0 - 2.0 * drop
        })
        .collect())
}

/// Squared voltages `v0 - 2 Z p` for loads with constant reactive ratios.
pub fn voltages_from_sensitivity(v0: f64, z: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    let n = z.nrows();
    (0..n).map(|j| v0 - 2.0 * (0..n).map(|k| z[(j, k)] * p[k]).sum::<f64>()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub from: BusId,
    pub to: BusId,
    pub p: f64,
    pub q: f64,
}

/// Lossless flows: each line carries the load of the subtree below it.
/// Returned in the order of `network.lines`.
pub fn line_flows(network: &FeederNetwork, p: &[f64], q: &[f64]) -> Result<Vec<LineFlow>, CapacityError> {
    let tree = network.tree()?;
    let n = tree.bus_order.len();
    check_len(n, p.len())?;
    check_len(n, q.len())?;
    let mut sub_p = p.to_vec();
    let mut sub_q = q.to_vec();
    for &b in tree.topological.iter().rev() {
        if let Some(parent) = tree.parent[b] {
            sub_p[parent] += sub_p[b];
            sub_q[parent] += sub_q[b];
        }
    }
    let mut flows: Vec<LineFlow> = network.lines.iter().map(|l| LineFlow { from: l.from, to: l.to, p: 0.0, q: 0.0 }).collect();
    for b in 0..n {
        let f = &mut flows[tree.feeding_line[b]];
        f.p = sub_p[b];
        f.q = sub_q[b];
    }
    Ok(flows)
}

/// Constraint that limits the new load in one interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Transformer,
    Voltage(BusId),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Transformer => f.write_str("transformer"),
            Binding::Voltage(b) => write!(f, "voltage(bus {b})"),
        }
    }
}

/// Reasons the baseline alone breaks a network limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaselineIssue {
    /// The headroom at `t` is negative.
    NegativeHeadroom { t: usize, value: f64, binding: Binding },
    /// A bus the new load cannot influence is already below its floor.
    UncoupledBusViolated { t: usize, bus: BusId, v_squared: f64, v_min_squared: f64 },
}

impl fmt::Display for BaselineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineIssue::NegativeHeadroom { t, value, binding } => {
                write!(f, "t={t}: residual capacity {value:.6} p.u. is negative ({binding})")
            }
            BaselineIssue::UncoupledBusViolated { t, bus, v_squared, v_min_squared } => {
                write!(f, "t={t}: bus {bus} voltage^2 {v_squared:.6} is below its floor {v_min_squared:.6}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCapacitySeries {
    /// Residual capacity per interval, p.u. Negative values are kept.
    pub values: Vec<f64>,
    pub binding: Vec<Binding>,
    pub connection_bus: BusId,
    pub diagnostics: Vec<BaselineIssue>,
}

impl ResidualCapacitySeries {
    /// Series with given values, all tagged as transformer-bound. Negative
    /// entries are reported the same way [`residual_capacity`] reports them.
    pub fn from_values(values: Vec<f64>, connection_bus: BusId) -> Self {
        let diagnostics = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < 0.0)
            .map(|(t, &value)| BaselineIssue::NegativeHeadroom { t, value, binding: Binding::Transformer })
            .collect();
        let binding = vec![Binding::Transformer; values.len()];
        ResidualCapacitySeries { values, binding, connection_bus, diagnostics }
    }

    pub fn is_baseline_feasible(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Headroom for the new load at `connection_bus` given the baseline loads,
/// interval by interval: the smaller of the transformer margin and the
/// tightest voltage margin over buses the new load can pull down.
pub fn residual_capacity(
    network: &FeederNetwork,
    z: &DMatrix<f64>,
    data: &LoadDataset,
    flex: &FlexibleProfile,
) -> Result<ResidualCapacitySeries, CapacityError> {
    let order = network.bus_order();
    let n = order.len();
    if z.nrows() != n || z.ncols() != n {
        return Err(CapacityError::DimensionMismatch { expected: n, got: z.nrows() });
    }
    if data.bus_order != order {
        return Err(CapacityError::BusOrderMismatch);
    }
    check_len(data.horizon(), flex.len())?;
    let col = order
        .binary_search(&flex.connection_bus)
        .map_err(|_| CapacityError::UnknownConnectionBus(flex.connection_bus))?;

    let v0 = network.substation.v0_squared;
    let p0_max = network.substation.p0_max;
    let v_min = network.v_min_squared();
    let coupled: Vec<bool> = (0..n).map(|j| z[(j, col)] > COUPLING_TOLERANCE).collect();

    let per_interval: Vec<(f64, Binding, Vec<BaselineIssue>)> = data
        .active
        .par_iter()
        .enumerate()
        .map(|(t, load)| {
            let mut best = p0_max - load.iter().sum::<f64>();
            let mut binding = Binding::Transformer;
            let mut issues = Vec::new();
            let v = voltages_from_sensitivity(v0, z, load);
            for j in 0..n {
                if coupled[j] {
                    let headroom = (v[j] - v_min[j]) / (2.0 * z[(j, col)]);
                    if headroom < best {
                        best = headroom;
                        binding = Binding::Voltage(order[j]);
                    }
                } else if v[j] < v_min[j] - COUPLING_TOLERANCE {
                    issues.push(BaselineIssue::UncoupledBusViolated {
                        t,
                        bus: order[j],
                        v_squared: v[j],
                        v_min_squared: v_min[j],
                    });
                }
            }
            if best < 0.0 {
                issues.insert(0, BaselineIssue::NegativeHeadroom { t, value: best, binding });
            }
            (best, binding, issues)
        })
        .collect();

    let mut values = Vec::with_capacity(per_interval.len());
    let mut binding = Vec::with_capacity(per_interval.len());
    let mut diagnostics = Vec::new();
    for (v, b, issues) in per_interval {
        values.push(v);
        binding.push(b);
        diagnostics.extend(issues);
    }
    Ok(ResidualCapacitySeries { values, binding, connection_bus: flex.connection_bus, diagnostics })
}
