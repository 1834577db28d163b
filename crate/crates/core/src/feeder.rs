//! Radial feeder model: parsing, validation and the root-path impedance
//! matrices used by the linearized branch-flow equations.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

pub type BusId = u32;

/// Base quantities for per-unit conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerUnitBase {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
}

impl PerUnitBase {
    /// Impedance base in ohms (`kV^2 / MVA`).
    pub fn z_base_ohm(&self) -> f64 {
        self.v_base_kv * self.v_base_kv * 1000.0 / self.s_base_kva
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / self.s_base_kva
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * self.s_base_kva
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    /// Lower limit on the squared voltage magnitude, p.u.^2.
    pub v_min_squared: f64,
    /// Reactive-to-active load ratio.
    pub eta: f64,
    /// Whether a baseline load column is expected for this bus.
    pub has_load: bool,
}

/// Line from a parent bus to its child; impedances in p.u.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Substation {
    pub bus_id: BusId,
    pub v0_squared: f64,
    /// Feeder head active power limit, p.u.
    pub p0_max: f64,
}

/// Single-phase radial feeder. `buses` excludes the substation bus.
#[derive(Clone, Debug, PartialEq)]
pub struct FeederNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub substation: Substation,
    pub base: PerUnitBase,
}

/// One failed structural or parameter check.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateBus(BusId),
    SubstationListedAsBus(BusId),
    UnknownBus { from: BusId, to: BusId, bus: BusId },
    SelfLoop(BusId),
    LineIntoSubstation { from: BusId },
    MultipleParents(BusId),
    Cycle { from: BusId, to: BusId },
    Unreachable(BusId),
    LineCount { lines: usize, buses: usize },
    NegativeImpedance { from: BusId, to: BusId },
    VoltageFloor { bus: BusId, v_min_squared: f64 },
    BadReactiveRatio { bus: BusId, eta: f64 },
    NonPositiveFeederLimit(f64),
    NonPositiveSubstationVoltage(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateBus(b) => write!(f, "duplicate bus id {b}"),
            Violation::SubstationListedAsBus(b) => write!(f, "bus {b} is the substation and cannot carry load data"),
            Violation::UnknownBus { from, to, bus } => write!(f, "line {from}->{to} references unknown bus {bus}"),
            Violation::SelfLoop(b) => write!(f, "line {b}->{b} is a self loop"),
            Violation::LineIntoSubstation { from } => write!(f, "line {from}->substation feeds the root"),
            Violation::MultipleParents(b) => write!(f, "multiple parents: bus {b}"),
            Violation::Cycle { from, to } => write!(f, "cycle closed by line {from}->{to}"),
            Violation::Unreachable(b) => write!(f, "unreachable bus {b}"),
            Violation::LineCount { lines, buses } => {
                write!(f, "{lines} lines for {buses} non-root buses (radial feeders need exactly one per bus)")
            }
            Violation::NegativeImpedance { from, to } => write!(f, "negative impedance on line {from}->{to}"),
            Violation::VoltageFloor { bus, v_min_squared } => {
                write!(f, "bus {bus}: squared voltage floor {v_min_squared} outside (0, v0^2]")
            }
            Violation::BadReactiveRatio { bus, eta } => write!(f, "bus {bus}: reactive ratio {eta} must be finite and >= 0"),
            Violation::NonPositiveFeederLimit(p) => write!(f, "feeder limit {p} must be positive"),
            Violation::NonPositiveSubstationVoltage(v) => write!(f, "substation squared voltage {v} must be positive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("malformed feeder document: {0}")]
    Malformed(String),
    #[error("missing substation")]
    MissingSubstation,
    #[error("substation must be bus 0, found bus {0}")]
    SubstationNotRoot(BusId),
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("non-numeric impedance on line {from}->{to}")]
    NonNumericImpedance { from: BusId, to: BusId },
    #[error("bus {bus}: power factor {pf} outside (0, 1]")]
    PowerFactor { bus: BusId, pf: f64 },
    #[error("invalid per-unit base: {0}")]
    Base(String),
    #[error("network is not a valid radial feeder: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeeder {
    substation: Option<RawSubstation>,
    buses: Vec<RawBus>,
    lines: Vec<RawLine>,
    base: RawBase,
}

#[derive(Deserialize)]
struct RawSubstation {
    bus_id: BusId,
    v0_pu: f64,
    p0_max_kw: f64,
}

#[derive(Deserialize)]
struct RawBus {
    id: BusId,
    #[serde(default = "default_v_min")]
    v_min_pu: f64,
    #[serde(default = "default_pf")]
    power_factor: f64,
    #[serde(default = "default_true")]
    load: bool,
}

fn default_v_min() -> f64 {
    0.95
}
fn default_pf() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct RawLine {
    from: BusId,
    to: BusId,
    r_ohm: Value,
    x_ohm: Value,
}

#[derive(Deserialize)]
struct RawBase {
    s_base_kva: f64,
    v_base_kv: f64,
}

/// Reactive-to-active ratio for a lagging power factor.
pub fn eta_from_power_factor(pf: f64) -> f64 {
    pf.acos().tan()
}

/// Parses a feeder document (JSON) and validates it.
///
/// Impedances arrive in ohms and voltages as p.u. magnitudes; the result is
/// in p.u. with squared voltages. A bus entry for the substation id is
/// accepted and ignored.
pub fn parse_feeder(source: &str) -> Result<FeederNetwork, FeederError> {
    let raw: RawFeeder = serde_json::from_str(source).map_err(|e| FeederError::Malformed(e.to_string()))?;
    let sub = raw.substation.ok_or(FeederError::MissingSubstation)?;
    if sub.bus_id != 0 {
        return Err(FeederError::SubstationNotRoot(sub.bus_id));
    }
    if !(raw.base.s_base_kva > 0.0 && raw.base.v_base_kv > 0.0) {
        return Err(FeederError::Base(format!("s_base_kva={} v_base_kv={}", raw.base.s_base_kva, raw.base.v_base_kv)));
    }
    let base = PerUnitBase { s_base_kva: raw.base.s_base_kva, v_base_kv: raw.base.v_base_kv };
    let z_base = base.z_base_ohm();

    let mut seen = HashSet::new();
    let mut buses = Vec::with_capacity(raw.buses.len());
    for b in raw.buses {
        if !seen.insert(b.id) {
            return Err(FeederError::DuplicateBus(b.id));
        }
        if b.id == sub.bus_id {
            continue;
        }
        if !(b.power_factor > 0.0 && b.power_factor <= 1.0) {
            return Err(FeederError::PowerFactor { bus: b.id, pf: b.power_factor });
        }
        buses.push(Bus {
            id: b.id,
            v_min_squared: b.v_min_pu * b.v_min_pu,
            eta: eta_from_power_factor(b.power_factor),
            has_load: b.load,
        });
    }
    buses.sort_by_key(|b| b.id);

    let mut lines = Vec::with_capacity(raw.lines.len());
    for l in raw.lines {
        let (Some(r), Some(x)) = (l.r_ohm.as_f64(), l.x_ohm.as_f64()) else {
            return Err(FeederError::NonNumericImpedance { from: l.from, to: l.to });
        };
        lines.push(Line { from: l.from, to: l.to, r: r / z_base, x: x / z_base });
    }

    let network = FeederNetwork {
        buses,
        lines,
        substation: Substation { bus_id: sub.bus_id, v0_squared: sub.v0_pu * sub.v0_pu, p0_max: base.kw_to_pu(sub.p0_max_kw) },
        base,
    };
    let report = validate_radial(&network);
    if report.is_empty() {
        Ok(network)
    } else {
        Err(FeederError::Invalid(report))
    }
}

/// Checks every structural and parameter invariant; an empty report means
/// the network is a valid radial feeder rooted at the substation.
pub fn validate_radial(network: &FeederNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let root = network.substation.bus_id;
    let sub = &network.substation;
    if !(sub.v0_squared > 0.0) {
        out.push(Violation::NonPositiveSubstationVoltage(sub.v0_squared));
    }
    if !(sub.p0_max > 0.0) {
        out.push(Violation::NonPositiveFeederLimit(sub.p0_max));
    }

    let mut ids = HashSet::new();
    for b in &network.buses {
        if b.id == root {
            out.push(Violation::SubstationListedAsBus(b.id));
        } else if !ids.insert(b.id) {
            out.push(Violation::DuplicateBus(b.id));
        }
        if !(b.v_min_squared > 0.0 && b.v_min_squared <= sub.v0_squared) {
            out.push(Violation::VoltageFloor { bus: b.id, v_min_squared: b.v_min_squared });
        }
        if !(b.eta.is_finite() && b.eta >= 0.0) {
            out.push(Violation::BadReactiveRatio { bus: b.id, eta: b.eta });
        }
    }

    let known = |id: BusId| id == root || ids.contains(&id);
    let mut parents: HashMap<BusId, usize> = HashMap::new();
    let mut children: HashMap<BusId, Vec<BusId>> = HashMap::new();
    let mut uf = UnionFind::default();
    for l in &network.lines {
        if !(l.r >= 0.0 && l.x >= 0.0) {
            out.push(Violation::NegativeImpedance { from: l.from, to: l.to });
        }
        let mut ok = true;
        for bus in [l.from, l.to] {
            if !known(bus) {
                out.push(Violation::UnknownBus { from: l.from, to: l.to, bus });
                ok = false;
            }
        }
        if l.from == l.to {
            out.push(Violation::SelfLoop(l.from));
            continue;
        }
        if !ok {
            continue;
        }
        if l.to == root {
            out.push(Violation::LineIntoSubstation { from: l.from });
        }
        let count = parents.entry(l.to).or_insert(0);
        *count += 1;
        if *count == 2 {
            out.push(Violation::MultipleParents(l.to));
        }
        if !uf.union(l.from, l.to) {
            out.push(Violation::Cycle { from: l.from, to: l.to });
        }
        children.entry(l.from).or_default().push(l.to);
    }

    let mut reached = HashSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(b) = queue.pop_front() {
        for &c in children.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            if reached.insert(c) {
                queue.push_back(c);
            }
        }
    }
    for b in &network.buses {
        if b.id != root && !reached.contains(&b.id) {
            out.push(Violation::Unreachable(b.id));
        }
    }
    if network.lines.len() != ids.len() {
        out.push(Violation::LineCount { lines: network.lines.len(), buses: ids.len() });
    }
    out
}

#[derive(Default)]
struct UnionFind {
    parent: HashMap<BusId, BusId>,
}

impl UnionFind {
    fn find(&mut self, x: BusId) -> BusId {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let r = self.find(p);
        self.parent.insert(x, r);
        r
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: BusId, b: BusId) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent.insert(ra, rb);
        true
    }
}

/// Parent links of a validated network, indexed by position in
/// [`FeederNetwork::bus_order`].
#[derive(Clone, Debug)]
pub struct RadialTree {
    pub bus_order: Vec<BusId>,
    /// Parent bus index, `None` for children of the substation.
    pub parent: Vec<Option<usize>>,
    /// Index into `network.lines` of the line feeding each bus.
    pub feeding_line: Vec<usize>,
    /// Bus indices with every parent listed before its children.
    pub topological: Vec<usize>,
}

impl FeederNetwork {
    /// Non-root bus ids in ascending order; this is the row order of every
    /// per-bus vector and matrix.
    pub fn bus_order(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.bus_order().binary_search(&id).ok()
    }

    fn sorted_buses(&self) -> Vec<&Bus> {
        let mut b: Vec<&Bus> = self.buses.iter().collect();
        b.sort_by_key(|b| b.id);
        b
    }

    /// Reactive ratios in bus order.
    pub fn etas(&self) -> Vec<f64> {
        self.sorted_buses().iter().map(|b| b.eta).collect()
    }

    /// Squared voltage floors in bus order.
    pub fn v_min_squared(&self) -> Vec<f64> {
        self.sorted_buses().iter().map(|b| b.v_min_squared).collect()
    }

    pub fn tree(&self) -> Result<RadialTree, FeederError> {
        let report = validate_radial(self);
        if !report.is_empty() {
            return Err(FeederError::Invalid(report));
        }
        let bus_order = self.bus_order();
        let n = bus_order.len();
        let idx: HashMap<BusId, usize> = bus_order.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let root = self.substation.bus_id;
        let mut parent = vec![None; n];
        let mut feeding_line = vec![0; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut top = Vec::new();
        for (k, l) in self.lines.iter().enumerate() {
            let c = idx[&l.to];
            feeding_line[c] = k;
            if l.from == root {
                top.push(c);
            } else {
                let p = idx[&l.from];
                parent[c] = Some(p);
                children[p].push(c);
            }
        }
        top.sort_unstable();
        let mut topological = Vec::with_capacity(n);
        let mut queue: VecDeque<usize> = top.into();
        while let Some(b) = queue.pop_front() {
            topological.push(b);
            children[b].sort_unstable();
            queue.extend(children[b].iter().copied());
        }
        Ok(RadialTree { bus_order, parent, feeding_line, topological })
    }

    /// Serializes back to the feeder document format (ohms, kW, p.u. magnitudes).
    pub fn to_document(&self) -> Value {
        let z = self.base.z_base_ohm();
        let buses: Vec<Value> = self
            .sorted_buses()
            .iter()
            .map(|b| {
                serde_json::json!({
                    "id": b.id,
                    "v_min_pu": b.v_min_squared.sqrt(),
                    "power_factor": b.eta.atan().cos(),
                    "load": b.has_load,
                })
            })
            .collect();
        let lines: Vec<Value> = self
            .lines
            .iter()
            .map(|l| serde_json::json!({"from": l.from, "to": l.to, "r_ohm": l.r * z, "x_ohm": l.x * z}))
            .collect();
        serde_json::json!({
            "substation": {
                "bus_id": self.substation.bus_id,
                "v0_pu": self.substation.v0_squared.sqrt(),
                "p0_max_kw": self.base.pu_to_kw(self.substation.p0_max),
            },
            "base": {"s_base_kva": self.base.s_base_kva, "v_base_kv": self.base.v_base_kv},
            "buses": buses,
            "lines": lines,
        })
    }
}

/// Root-path resistance and reactance matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpedanceMatrices {
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub bus_order: Vec<BusId>,
}

/// Entry `(j, k)` is the total impedance of the line segments shared by the
/// substation-to-`j` and substation-to-`k` paths.
pub fn impedance_matrices(network: &FeederNetwork) -> Result<ImpedanceMatrices, FeederError> {
    let tree = network.tree()?;
    let n = tree.bus_order.len();
    let mut depth = vec![0usize; n];
    let mut path_r = vec![0.0; n];
    let mut path_x = vec![0.0; n];
    for &b in &tree.topological {
        let line = &network.lines[tree.feeding_line[b]];
        let (d, r, x) = match tree.parent[b] {
            Some(p) => (depth[p] + 1, path_r[p], path_x[p]),
            None => (0, 0.0, 0.0),
        };
        depth[b] = d;
        path_r[b] = r + line.r;
        path_x[b] = x + line.x;
    }

    let mut r = DMatrix::zeros(n, n);
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = path_r[j];
        x[(j, j)] = path_x[j];
        for k in (j + 1)..n {
            let (mut a, mut b) = (j, k);
            let common = loop {
                if a == b {
                    break Some(a);
                }
                if depth[a] >= depth[b] {
                    match tree.parent[a] {
                        Some(p) => a = p,
                        None => break None,
                    }
                } else {
                    match tree.parent[b] {
                        Some(p) => b = p,
                        None => break None,
                    }
                }
            };
            if let Some(c) = common {
                r[(j, k)] = path_r[c];
                r[(k, j)] = path_r[c];
                x[(j, k)] = path_x[c];
                x[(k, j)] = path_x[c];
            }
        }
    }
    Ok(ImpedanceMatrices { r, x, bus_order: tree.bus_order })
}

/// `Z = R + X diag(eta)`: column `k` of `X` is scaled by `eta[k]`.
pub fn sensitivity_matrix(m: &ImpedanceMatrices, eta: &[f64]) -> Result<DMatrix<f64>, FeederError> {
    let n = m.r.nrows();
    if eta.len() != n {
        return Err(FeederError::DimensionMismatch { expected: n, got: eta.len() });
    }
    if eta.iter().all(|&e| e == 0.0) {
        return Ok(m.r.clone());
    }
    let mut z = m.r.clone();
    for k in 0..n {
        let e = eta[k];
        if e != 0.0 {
            for j in 0..n {
                z[(j, k)] += m.x[(j, k)] * e;
            }
        }
    }
    Ok(z)
}
