//! Baseline load tables, the normalized flexible-load profile, baseline
//! calibration and a seeded generator for synthetic studies.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::feeder::{impedance_matrices, sensitivity_matrix, BusId, FeederError, FeederNetwork, PerUnitBase};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const DEFAULT_INTERVAL_MINUTES: i64 = 15;

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("table has no timestamp column")]
    NoTimestampColumn,
    #[error("unrecognized column {0:?} (expected bus_<id>)")]
    BadColumn(String),
    #[error("column for unknown bus {0}")]
    UnknownBus(BusId),
    #[error("missing column for load bus {0}")]
    MissingColumn(BusId),
    #[error("bad timestamp {value:?} at t={t}")]
    BadTimestamp { t: usize, value: String },
    #[error("non-uniform spacing at t={t}")]
    NonUniform { t: usize },
    #[error("negative load at t={t}, bus {bus}")]
    NegativeLoad { t: usize, bus: BusId },
    #[error("non-numeric value {value:?} at t={t}, column {column}")]
    BadValue { t: usize, column: String, value: String },
    #[error("table has no rows")]
    Empty,
    #[error("flexible profile is zero everywhere")]
    AllZero,
    #[error("flexible profile value {value} at t={t} is negative or not finite")]
    BadProfileValue { t: usize, value: f64 },
    #[error("flexible profile has {got} intervals, load table has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("flexible profile timestamp at t={t} does not match the load table")]
    TimestampMismatch { t: usize },
    #[error("baseline loads are identically zero")]
    ZeroLoads,
    #[error("voltage floor {0} p.u. cannot be met by any positive load scaling")]
    FloorUnattainable(f64),
    #[error("calibration parameter out of range: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Feeder(#[from] FeederError),
}

/// Per-bus active baseline load over the planning horizon, in p.u.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadDataset {
    pub timestamps: Vec<NaiveDateTime>,
    pub interval_minutes: i64,
    /// Column order of `active`.
    pub bus_order: Vec<BusId>,
    /// `active[t][j]`: load of bus `bus_order[j]` in interval `t`.
    pub active: Vec<Vec<f64>>,
}

impl LoadDataset {
    pub fn horizon(&self) -> usize {
        self.active.len()
    }

    pub fn num_buses(&self) -> usize {
        self.bus_order.len()
    }

    /// Total baseline load at interval `t`.
    pub fn aggregate(&self, t: usize) -> f64 {
        self.active[t].iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> LoadDataset {
        LoadDataset { active: self.active.iter().map(|row| row.iter().map(|v| v * factor).collect()).collect(), ..self.clone() }
    }

    /// Writes the table in kW with a `timestamp,bus_<id>,...` header.
    pub fn write_csv<W: Write>(&self, base: &PerUnitBase, writer: W) -> Result<(), TimeseriesError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.bus_order.iter().map(|b| format!("bus_{b}")));
        w.write_record(&header)?;
        for (t, row) in self.active.iter().enumerate() {
            let mut rec = vec![self.timestamps[t].format(TIMESTAMP_FORMAT).to_string()];
            rec.extend(row.iter().map(|v| base.pu_to_kw(*v).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Normalized profile of the new load and the bus it connects to.
#[derive(Clone, Debug, PartialEq)]
pub struct FlexibleProfile {
    pub values: Vec<f64>,
    pub connection_bus: BusId,
}

impl FlexibleProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
}

fn check_spacing(timestamps: &[NaiveDateTime]) -> Result<i64, TimeseriesError> {
    if timestamps.len() < 2 {
        return Ok(DEFAULT_INTERVAL_MINUTES);
    }
    let step = timestamps[1] - timestamps[0];
    if step <= Duration::zero() {
        return Err(TimeseriesError::NonUniform { t: 1 });
    }
    for t in 2..timestamps.len() {
        if timestamps[t] - timestamps[t - 1] != step {
            return Err(TimeseriesError::NonUniform { t });
        }
    }
    Ok(step.num_minutes())
}

fn parse_number(t: usize, column: &str, field: &str) -> Result<f64, TimeseriesError> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(TimeseriesError::BadValue { t, column: column.to_string(), value: field.to_string() }),
    }
}

/// Reads a `timestamp,bus_<id>,...` table in kW and aligns it with the
/// feeder's bus order. Buses flagged without load and absent from the table
/// get zero load.
pub fn load_profiles<R: Read>(reader: R, network: &FeederNetwork) -> Result<LoadDataset, TimeseriesError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(TimeseriesError::NoTimestampColumn);
    }
    let bus_order = network.bus_order();
    let mut column_bus = Vec::new();
    for h in headers.iter().skip(1) {
        let id: BusId = h
            .strip_prefix("bus_")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TimeseriesError::BadColumn(h.to_string()))?;
        let idx = bus_order.binary_search(&id).map_err(|_| TimeseriesError::UnknownBus(id))?;
        column_bus.push((id, idx));
    }
    for b in &network.buses {
        if b.has_load && !column_bus.iter().any(|&(id, _)| id == b.id) {
            return Err(TimeseriesError::MissingColumn(b.id));
        }
    }

    let n = bus_order.len();
    let mut timestamps = Vec::new();
    let mut active = Vec::new();
    for (t, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let stamp = rec.get(0).unwrap_or("");
        timestamps.push(
            parse_timestamp(stamp).ok_or_else(|| TimeseriesError::BadTimestamp { t, value: stamp.to_string() })?,
        );
        let mut row = vec![0.0; n];
        for (k, &(id, idx)) in column_bus.iter().enumerate() {
            let field = rec.get(k + 1).unwrap_or("");
            let kw = parse_number(t, &headers[k + 1], field)?;
            if kw < 0.0 {
                return Err(TimeseriesError::NegativeLoad { t, bus: id });
            }
            row[idx] = network.base.kw_to_pu(kw);
        }
        active.push(row);
    }
    if active.is_empty() {
        return Err(TimeseriesError::Empty);
    }
    let interval_minutes = check_spacing(&timestamps)?;
    Ok(LoadDataset { timestamps, interval_minutes, bus_order, active })
}

/// Raw flexible-load series from a `timestamp,value_kw` table.
pub fn read_flexible_table<R: Read>(reader: R) -> Result<(Vec<NaiveDateTime>, Vec<f64>), TimeseriesError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") || headers.len() < 2 {
        return Err(TimeseriesError::NoTimestampColumn);
    }
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (t, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let stamp = rec.get(0).unwrap_or("");
        stamps.push(parse_timestamp(stamp).ok_or_else(|| TimeseriesError::BadTimestamp { t, value: stamp.to_string() })?);
        values.push(parse_number(t, &headers[1], rec.get(1).unwrap_or(""))?);
    }
    if values.is_empty() {
        return Err(TimeseriesError::Empty);
    }
    check_spacing(&stamps)?;
    Ok((stamps, values))
}

pub fn write_flexible_table<W: Write>(timestamps: &[NaiveDateTime], values_kw: &[f64], writer: W) -> Result<(), TimeseriesError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "value_kw"])?;
    for (ts, v) in timestamps.iter().zip(values_kw) {
        w.write_record([ts.format(TIMESTAMP_FORMAT).to_string(), v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Checks that a flexible profile lines up with the load table interval by interval.
pub fn check_alignment(data: &LoadDataset, stamps: &[NaiveDateTime]) -> Result<(), TimeseriesError> {
    if stamps.len() != data.horizon() {
        return Err(TimeseriesError::LengthMismatch { expected: data.horizon(), got: stamps.len() });
    }
    match stamps.iter().zip(&data.timestamps).position(|(a, b)| a != b) {
        Some(t) => Err(TimeseriesError::TimestampMismatch { t }),
        None => Ok(()),
    }
}

/// Scales `raw` so that its peak is exactly one.
pub fn normalize_flexible_profile(raw: &[f64], bus: BusId) -> Result<FlexibleProfile, TimeseriesError> {
    if let Some((t, &value)) = raw.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(TimeseriesError::BadProfileValue { t, value });
    }
    let peak = raw.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(TimeseriesError::AllZero);
    }
    Ok(FlexibleProfile { values: raw.iter().map(|v| v / peak).collect(), connection_bus: bus })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// Scaled and headroom-reduced baseline.
    pub dataset: LoadDataset,
    /// Feeder limit set to the peak aggregate of the scaled baseline.
    pub p0_max: f64,
    /// Uniform scale applied before the headroom reduction.
    pub scale: f64,
}

/// Squared-voltage drops `Z l(t)` for every interval, with the substation
/// voltage left out.
pub(crate) fn voltage_drops(z: &DMatrix<f64>, data: &LoadDataset) -> Vec<Vec<f64>> {
    let n = data.num_buses();
    data.active
        .iter()
        .map(|row| (0..n).map(|j| (0..n).map(|k| z[(j, k)] * row[k]).sum()).collect())
        .collect()
}

/// Scales the baseline so the lowest bus voltage just reaches `v_floor`
/// with the substation at 1.0 p.u., sets the feeder limit to the resulting
/// peak, then removes `headroom_fraction` of the load.
pub fn calibrate_baseline(
    network: &FeederNetwork,
    data: &LoadDataset,
    v_floor: f64,
    headroom_fraction: f64,
) -> Result<Calibration, TimeseriesError> {
    if !(v_floor > 0.0 && v_floor <= 1.0) {
        return Err(TimeseriesError::BadParameter(format!("v_floor {v_floor} not in (0, 1]")));
    }
    if !(0.0..1.0).contains(&headroom_fraction) {
        return Err(TimeseriesError::BadParameter(format!("headroom_fraction {headroom_fraction} not in [0, 1)")));
    }
    if data.active.iter().flatten().all(|&v| v == 0.0) {
        return Err(TimeseriesError::ZeroLoads);
    }
    let m = impedance_matrices(network)?;
    let z = sensitivity_matrix(&m, &network.etas())?;
    let drops = voltage_drops(&z, data);
    let floor_sq = v_floor * v_floor;
    let min_voltage = |k: f64| -> f64 {
        drops.iter().flatten().map(|d| 1.0 - 2.0 * k * d).fold(f64::INFINITY, f64::min)
    };

    let mut hi = 1.0;
    let mut doublings = 0;
    while min_voltage(hi) >= floor_sq {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            // all drops are zero: zero-impedance feeder
            return Err(TimeseriesError::FloorUnattainable(v_floor));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if min_voltage(mid) >= floor_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(TimeseriesError::FloorUnattainable(v_floor));
    }

    let scaled = data.scaled(lo);
    let p0_max = (0..scaled.horizon()).map(|t| scaled.aggregate(t)).fold(0.0, f64::max);
    Ok(Calibration { dataset: scaled.scaled(1.0 - headroom_fraction), p0_max, scale: lo })
}

/// Shape of synthetic daily load curves.
#[derive(Clone, Debug, PartialEq)]
pub struct DailyShape {
    /// Mean per-bus load, p.u.
    pub base: f64,
    /// Overall variability; zero yields constant profiles.
    pub amplitude: f64,
    pub evening_peak_hour: f64,
    pub morning_peak_hour: f64,
    /// Morning bump height relative to the evening peak.
    pub morning_weight: f64,
    pub peak_width_hours: f64,
    /// Standard deviation of the shared day-to-day multiplier.
    pub day_variation: f64,
    /// Standard deviation of per-interval noise.
    pub noise: f64,
    pub interval_minutes: i64,
}

impl Default for DailyShape {
    fn default() -> Self {
        DailyShape {
            base: 0.01,
            amplitude: 1.0,
            evening_peak_hour: 18.5,
            morning_peak_hour: 7.5,
            morning_weight: 0.35,
            peak_width_hours: 2.0,
            day_variation: 0.12,
            noise: 0.04,
            interval_minutes: DEFAULT_INTERVAL_MINUTES,
        }
    }
}

/// Number of distinct household archetypes assigned round-robin to buses.
const ARCHETYPES: usize = 8;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    // wrap around midnight
    let d = ((hour - center + 36.0) % 24.0) - 12.0;
    (-0.5 * (d / width).powi(2)).exp()
}

pub fn synthetic_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid date")
}

pub fn synthetic_timestamps(horizon: usize, interval_minutes: i64) -> Vec<NaiveDateTime> {
    let start = synthetic_start();
    (0..horizon).map(|t| start + Duration::minutes(interval_minutes * t as i64)).collect()
}

/// Seeded synthetic baseline for buses `1..=n`.
pub fn synth_profiles(seed: u64, horizon: usize, n: usize, shape: &DailyShape) -> LoadDataset {
    let ids: Vec<BusId> = (1..=n as BusId).collect();
    synth_profiles_for(seed, horizon, &ids, shape)
}

/// Seeded synthetic baseline for the given buses. Each bus follows one of
/// a few household archetypes (assigned round-robin over the sorted ids)
/// scaled by its own size factor; days share a common weather multiplier.
pub fn synth_profiles_for(seed: u64, horizon: usize, bus_ids: &[BusId], shape: &DailyShape) -> LoadDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = bus_ids.to_vec();
    ids.sort_unstable();
    let per_day = (24 * 60 / shape.interval_minutes.max(1)) as usize;
    let days = horizon.div_ceil(per_day.max(1));
    let day_factor: Vec<f64> = (0..days).map(|_| (1.0 + shape.day_variation * gaussian(&mut rng)).max(0.2)).collect();

    let archetypes: Vec<Vec<f64>> = (0..ARCHETYPES)
        .map(|_| {
            let shift = rng.gen_range(-1.0..1.0);
            let weight = shape.morning_weight * rng.gen_range(0.6..1.4);
            (0..horizon)
                .map(|t| {
                    let hour = (t * shape.interval_minutes as usize % (24 * 60)) as f64 / 60.0;
                    let curve = bump(hour, shape.evening_peak_hour + shift, shape.peak_width_hours)
                        + weight * bump(hour, shape.morning_peak_hour + shift, 0.75 * shape.peak_width_hours)
                        - 0.3 * bump(hour, 3.5, 2.0);
                    let day = day_factor[t / per_day.max(1)];
                    shape.amplitude * (day * curve + (day - 1.0) + shape.noise * gaussian(&mut rng))
                })
                .collect()
        })
        .collect();
    let sizes: Vec<f64> = ids.iter().map(|_| rng.gen_range(0.5..1.5)).collect();

    let active = (0..horizon)
        .map(|t| {
            ids.iter()
                .enumerate()
                .map(|(j, _)| (shape.base * sizes[j] * (1.0 + archetypes[j % ARCHETYPES][t])).max(0.0))
                .collect()
        })
        .collect();
    LoadDataset {
        timestamps: synthetic_timestamps(horizon, shape.interval_minutes),
        interval_minutes: shape.interval_minutes,
        bus_order: ids,
        active,
    }
}

/// Seeded raw EV-charging-like series: a dominant evening plug-in peak
/// trailing into the night, a small workplace bump, and a nonzero floor.
pub fn synth_flexible_raw(seed: u64, horizon: usize, interval_minutes: i64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE5);
    let per_day = (24 * 60 / interval_minutes.max(1)) as usize;
    let days = horizon.div_ceil(per_day.max(1));
    let day_scale: Vec<f64> = (0..days).map(|_| rng.gen_range(0.75..1.0)).collect();
    (0..horizon)
        .map(|t| {
            let hour = (t * interval_minutes as usize % (24 * 60)) as f64 / 60.0;
            let evening = bump(hour, 19.5, 2.2);
            let workplace = 0.3 * bump(hour, 9.5, 1.5);
            let v = 0.08 + day_scale[t / per_day.max(1)] * (evening + workplace) + 0.03 * gaussian(&mut rng);
            v.max(0.02)
        })
        .collect()
}
