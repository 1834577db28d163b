//! Assembled hosting studies: a feeder, its calibrated baseline, the
//! flexible profile and the residual capacity at the connection bus.
//! Includes a seeded synthetic 123-bus study.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::capacity::{residual_capacity, CapacityError, ResidualCapacitySeries};
use crate::feeder::{
    eta_from_power_factor, impedance_matrices, sensitivity_matrix, Bus, BusId, FeederError, FeederNetwork, Line,
    PerUnitBase, Substation,
};
use crate::hosting::{HostingError, HostingProblemSpec};
use crate::risk::RiskSpec;
use crate::timeseries::{
    calibrate_baseline, normalize_flexible_profile, synth_flexible_raw, synth_profiles_for, DailyShape, FlexibleProfile,
    LoadDataset, TimeseriesError,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Hosting(#[from] HostingError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibrate {
    pub v_floor: f64,
    pub headroom_fraction: f64,
}

impl Default for Calibrate {
    fn default() -> Self {
        Calibrate { v_floor: 0.95, headroom_fraction: 0.15 }
    }
}

#[derive(Clone, Debug)]
pub struct Study {
    /// Feeder with the transformer limit in effect for the study.
    pub network: FeederNetwork,
    pub loads: LoadDataset,
    pub flex: FlexibleProfile,
    pub z: DMatrix<f64>,
    pub residual: ResidualCapacitySeries,
}

impl Study {
    /// Builds a study, optionally calibrating the baseline first; the
    /// calibrated transformer limit replaces the feeder's.
    pub fn assemble(
        mut network: FeederNetwork,
        loads: LoadDataset,
        flex: FlexibleProfile,
        calibrate: Option<&Calibrate>,
    ) -> Result<Study, StudyError> {
        let loads = match calibrate {
            Some(c) => {
                let cal = calibrate_baseline(&network, &loads, c.v_floor, c.headroom_fraction)?;
                network.substation.p0_max = cal.p0_max;
                cal.dataset
            }
            None => loads,
        };
        let m = impedance_matrices(&network)?;
        let z = sensitivity_matrix(&m, &network.etas())?;
        let residual = residual_capacity(&network, &z, &loads, &flex)?;
        Ok(Study { network, loads, flex, z, residual })
    }

    pub fn horizon(&self) -> usize {
        self.loads.horizon()
    }

    pub fn hosting_spec(&self, risk: RiskSpec, lambda: f64) -> Result<HostingProblemSpec, StudyError> {
        Ok(HostingProblemSpec::new(self.residual.clone(), self.flex.clone(), risk, lambda)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStudyParams {
    pub seed: u64,
    pub horizon: usize,
    pub connection_bus: BusId,
    pub calibrate: Calibrate,
    pub shape: DailyShape,
}

impl Default for SyntheticStudyParams {
    fn default() -> Self {
        SyntheticStudyParams {
            seed: 7,
            horizon: 2688,
            connection_bus: 13,
            calibrate: Calibrate::default(),
            shape: DailyShape::default(),
        }
    }
}

pub const SYNTH_BUSES: usize = 123;
pub const SYNTH_LOAD_BUSES: usize = 106;

/// Seeded radial feeder with buses `1..=123` below substation bus 0: a main
/// trunk with laterals branching off, 4.16 kV / 1 MVA base, 0.95 lagging
/// power factor, and load on 106 buses.
pub fn synth_feeder(seed: u64) -> FeederNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = PerUnitBase { s_base_kva: 1000.0, v_base_kv: 4.16 };
    let z_base = base.z_base_ohm();
    let trunk = 20;
    let mut lines = Vec::with_capacity(SYNTH_BUSES);
    for id in 1..=SYNTH_BUSES as BusId {
        let (from, km) = if id as usize <= trunk {
            (id - 1, rng.gen_range(0.15..0.35))
        } else if rng.gen_bool(0.6) {
            // extend the most recent lateral
            (id - 1, rng.gen_range(0.05..0.2))
        } else {
            (rng.gen_range(1..=trunk as BusId), rng.gen_range(0.05..0.25))
        };
        // overhead line, roughly 0.3 + j0.6 ohm per km
        lines.push(Line { from, to: id, r: 0.3 * km / z_base, x: 0.6 * km / z_base });
    }
    let mut no_load: Vec<BusId> = Vec::new();
    while no_load.len() < SYNTH_BUSES - SYNTH_LOAD_BUSES {
        let id = rng.gen_range(1..=SYNTH_BUSES as BusId);
        if !no_load.contains(&id) {
            no_load.push(id);
        }
    }
    let eta = eta_from_power_factor(0.95);
    let buses = (1..=SYNTH_BUSES as BusId)
        .map(|id| Bus { id, v_min_squared: 0.95 * 0.95, eta, has_load: !no_load.contains(&id) })
        .collect();
    FeederNetwork { buses, lines, substation: Substation { bus_id: 0, v0_squared: 1.0, p0_max: 1.0 }, base }
}

/// Synthetic baseline over every bus of `network`; buses without load get
/// zero columns.
pub fn synth_loads(network: &FeederNetwork, seed: u64, horizon: usize, shape: &DailyShape) -> LoadDataset {
    let load_ids: Vec<BusId> = network.buses.iter().filter(|b| b.has_load).map(|b| b.id).collect();
    let partial = synth_profiles_for(seed, horizon, &load_ids, shape);
    let order = network.bus_order();
    let active = partial
        .active
        .iter()
        .map(|row| {
            let mut full = vec![0.0; order.len()];
            for (k, id) in partial.bus_order.iter().enumerate() {
                full[order.binary_search(id).expect("load bus in network")] = row[k];
            }
            full
        })
        .collect();
    LoadDataset { active, bus_order: order, ..partial }
}

/// The bundled desk-scale study.
pub fn synthetic_study(params: &SyntheticStudyParams) -> Result<Study, StudyError> {
    let network = synth_feeder(params.seed);
    let loads = synth_loads(&network, params.seed, params.horizon, &params.shape);
    let raw = synth_flexible_raw(params.seed, params.horizon, params.shape.interval_minutes);
    let flex = normalize_flexible_profile(&raw, params.connection_bus)?;
    Study::assemble(network, loads, flex, Some(&params.calibrate))
}
