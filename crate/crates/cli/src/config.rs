//! Study configuration: one JSON document, every scalar overridable with
//! `--set dotted.key=value`.

use std::path::{Path, PathBuf};

use flexhost::feeder::BusId;
use flexhost::hosting::{HostingOptions, SolveMethod, TuneSettings};
use flexhost::lpcore::SolverSettings;
use flexhost::risk::RiskSpec;
use flexhost::study::Calibrate;
use flexhost::sweep::SweepSettings;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub rho: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig { alpha: 0.99, epsilon: 0.0, rho: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub v_floor: f64,
    pub headroom_fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let c = Calibrate::default();
        CalibrationConfig { enabled: true, v_floor: c.v_floor, headroom_fraction: c.headroom_fraction }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Intervention budgets as fractions of the horizon.
    pub budget_fractions: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    pub max_doublings: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rhos: vec![0.0, 0.05, 0.1, 0.2],
            alphas: vec![0.9, 0.95, 0.99],
            budget_fractions: vec![0.0, 0.001, 0.002, 0.004, 0.006, 0.008, 0.01],
            lambda_min: 0.01,
            lambda_max: 100.0,
            lambda_points: 10,
            max_doublings: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_iterations: usize,
    pub eps_n: usize,
    /// Double `lambda_max` until the target is reachable before bisecting.
    pub expand_bracket: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let t = TuneSettings::default();
        TuneConfig {
            lambda_min: t.lambda_min,
            lambda_max: t.lambda_max,
            max_iterations: t.max_iterations,
            eps_n: t.eps_n,
            expand_bracket: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub max_iterations: Option<usize>,
    pub degeneracy_streak: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig {
            tol_feas: s.tol_feas,
            tol_opt: s.tol_opt,
            max_iterations: s.max_iterations,
            degeneracy_streak: s.degeneracy_streak,
            method: SolveMethod::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Feeder document. With no feeder, load table and profile given, the
    /// bundled synthetic study is used.
    pub feeder: Option<PathBuf>,
    pub loads: Option<PathBuf>,
    pub flex: Option<PathBuf>,
    pub connection_bus: BusId,
    pub risk: RiskConfig,
    pub lambda: f64,
    pub intervention_target: Option<usize>,
    pub calibration: CalibrationConfig,
    pub sweep: SweepConfig,
    pub tune: TuneConfig,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Seed and horizon of the synthetic study.
    pub seed: u64,
    pub horizon: usize,
    /// Worker threads for sweeps; unset uses every core.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            feeder: None,
            loads: None,
            flex: None,
            connection_bus: 13,
            risk: RiskConfig::default(),
            lambda: 0.0,
            intervention_target: None,
            calibration: CalibrationConfig::default(),
            sweep: SweepConfig::default(),
            tune: TuneConfig::default(),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 7,
            horizon: 2688,
            threads: None,
        }
    }
}

/// Sets `key` (dot separated) in a JSON object tree. The value is read as
/// JSON when it parses, as a plain string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::usage(format!("empty key segment in {key:?}")));
        }
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::usage(format!("{key:?}: {:?} is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl StudyConfig {
    /// Reads the config file (if any), applies overrides and resolves
    /// relative paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<StudyConfig, CliError> {
        let (mut doc, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::input(format!("config {}: {e}", p.display())))?;
                (doc, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (serde_json::to_value(StudyConfig::default()).expect("serializable"), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: StudyConfig =
            serde_json::from_value(doc).map_err(|e| CliError::input(format!("invalid configuration: {e}")))?;
        for p in [&mut cfg.feeder, &mut cfg.loads, &mut cfg.flex].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn risk_spec(&self) -> Result<RiskSpec, CliError> {
        RiskSpec::new(self.risk.alpha, self.risk.epsilon, self.risk.rho).map_err(|e| CliError::input(e.to_string()))
    }

    pub fn hosting_options(&self) -> HostingOptions {
        HostingOptions {
            method: self.solver.method,
            solver: SolverSettings {
                tol_feas: self.solver.tol_feas,
                tol_opt: self.solver.tol_opt,
                max_iterations: self.solver.max_iterations,
                degeneracy_streak: self.solver.degeneracy_streak,
            },
        }
    }

    pub fn tune_settings(&self) -> TuneSettings {
        TuneSettings {
            lambda_min: self.tune.lambda_min,
            lambda_max: self.tune.lambda_max,
            max_iterations: self.tune.max_iterations,
            eps_n: self.tune.eps_n,
        }
    }

    pub fn calibrate(&self) -> Option<Calibrate> {
        self.calibration.enabled.then_some(Calibrate {
            v_floor: self.calibration.v_floor,
            headroom_fraction: self.calibration.headroom_fraction,
        })
    }

    pub fn sweep_settings(&self, horizon: usize) -> Result<SweepSettings, CliError> {
        let s = &self.sweep;
        if s.rhos.is_empty() || s.alphas.is_empty() || s.budget_fractions.is_empty() || s.lambda_points == 0 {
            return Err(CliError::input("sweep grids must be non-empty"));
        }
        if !(s.lambda_min > 0.0 && s.lambda_max >= s.lambda_min) {
            return Err(CliError::input("lambda grid needs 0 < lambda_min <= lambda_max"));
        }
        Ok(SweepSettings {
            alpha: self.risk.alpha,
            epsilon: self.risk.epsilon,
            rhos: s.rhos.clone(),
            alphas: s.alphas.clone(),
            budgets: SweepSettings::budgets_from_fractions(horizon, &s.budget_fractions),
            lambdas: SweepSettings::log_grid(s.lambda_min, s.lambda_max, s.lambda_points),
            tune: self.tune_settings(),
            max_doublings: if self.tune.expand_bracket { s.max_doublings } else { 0 },
            options: self.hosting_options(),
        })
    }
}
