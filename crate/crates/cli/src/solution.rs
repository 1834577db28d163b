//! The solution file: everything later reports need, in kW.

use std::path::Path;

use flexhost::hosting::{HostingProblemSpec, HostingSolution};
use flexhost::study::Study;
use flexhost::timeseries::TIMESTAMP_FORMAT;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t: usize,
    pub timestamp: String,
    pub l_hat: f64,
    pub baseline_kw: f64,
    pub delta_p_kw: f64,
    pub p_curt_kw: f64,
    pub served_kw: f64,
    pub zeta_kw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: String,
    #[serde(rename = "P_kw")]
    pub p_kw: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Auxiliary VaR variable, kW.
    pub gamma: f64,
    /// Empirical CVaR of the violation series, kW.
    pub cvar: f64,
    pub var: f64,
    pub intervention_count: usize,
    pub tau_kw: f64,
    pub p0_max_kw: f64,
    pub connection_bus: u32,
    pub interval_minutes: i64,
    pub schedule: Vec<ScheduleEntry>,
}

impl SolutionFile {
    pub fn build(study: &Study, spec: &HostingProblemSpec, sol: &HostingSolution) -> Self {
        let base = study.network.base;
        let kw = |v: f64| base.pu_to_kw(v);
        let schedule = (0..study.horizon())
            .map(|t| ScheduleEntry {
                t,
                timestamp: study.loads.timestamps[t].format(TIMESTAMP_FORMAT).to_string(),
                l_hat: study.flex.values[t],
                baseline_kw: kw(study.loads.aggregate(t)),
                delta_p_kw: kw(study.residual.values[t]),
                p_curt_kw: kw(sol.p_curt[t]),
                served_kw: kw(sol.served[t]),
                zeta_kw: kw(sol.zeta[t]),
            })
            .collect();
        SolutionFile {
            status: sol.status.to_string(),
            p_kw: kw(sol.p),
            lambda: sol.lambda,
            alpha: spec.risk.alpha,
            rho: spec.risk.rho,
            epsilon: spec.risk.epsilon,
            gamma: kw(sol.gamma),
            cvar: kw(sol.cvar_of_zeta),
            var: kw(sol.var_of_zeta),
            intervention_count: sol.intervention_count,
            tau_kw: kw(spec.tau),
            p0_max_kw: kw(study.network.substation.p0_max),
            connection_bus: study.flex.connection_bus,
            interval_minutes: study.loads.interval_minutes,
            schedule,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("solution serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<SolutionFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read solution {}: {e}", path.display())))?;
        let sol: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("malformed solution file {}: {e}", path.display())))?;
        if sol.schedule.is_empty() {
            return Err(CliError::input(format!("malformed solution file {}: empty schedule", path.display())));
        }
        Ok(sol)
    }

    pub fn zeta(&self) -> Vec<f64> {
        self.schedule.iter().map(|e| e.zeta_kw).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ExitKind;

    fn sample() -> SolutionFile {
        SolutionFile {
            status: "optimal".into(),
            p_kw: 12.5,
            lambda: 0.25,
            alpha: 0.9,
            rho: 0.1,
            epsilon: 0.0,
            gamma: -0.5,
            cvar: -0.1,
            var: -0.5,
            intervention_count: 1,
            tau_kw: 1e-3,
            p0_max_kw: 500.0,
            connection_bus: 2,
            interval_minutes: 15,
            schedule: vec![ScheduleEntry {
                t: 0,
                timestamp: "2024-01-01T00:00:00".into(),
                l_hat: 1.0,
                baseline_kw: 200.0,
                delta_p_kw: 10.0,
                p_curt_kw: 2.5,
                served_kw: 10.0,
                zeta_kw: 1.25,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/sol.json");
        sample().write(&path).unwrap();
        assert_eq!(SolutionFile::read(&path).unwrap(), sample());
        assert!(std::fs::read_to_string(&path).unwrap().contains("\"P_kw\": 12.5"));
        assert_eq!(sample().zeta(), vec![1.25]);
    }

    #[test]
    fn empty_schedule_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.json");
        SolutionFile { schedule: vec![], ..sample() }.write(&path).unwrap();
        assert_eq!(SolutionFile::read(&path).unwrap_err().kind, ExitKind::InputInvalid);
        assert_eq!(SolutionFile::read(&dir.path().join("none.json")).unwrap_err().kind, ExitKind::Usage);
    }
}
