//! Subcommand implementations. Each writes its human-readable summary to
//! `out` and its tables/files to disk.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use flexhost::feeder::{parse_feeder, FeederNetwork};
use flexhost::hosting::{expand_lambda_bracket, solve_hosting_with, tune_lambda, HostingProblemSpec};
use flexhost::risk::{empirical_cdf, empirical_cvar, empirical_var};
use flexhost::study::{synthetic_study, Study, SyntheticStudyParams};
use flexhost::sweep::{run_sweeps, SweepTables};
use flexhost::timeseries::{
    check_alignment, load_profiles, normalize_flexible_profile, read_flexible_table,
    write_flexible_table, DailyShape, TIMESTAMP_FORMAT,
};
use log::info;

use crate::config::{CalibrationConfig, StudyConfig};
use crate::error::{CliError, ExitKind};
use crate::solution::SolutionFile;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::usage(format!("file not found: {}", path.display()))
    } else {
        CliError::input(format!("{}: {e}", path.display()))
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map_err(|e| io_err(path, e))
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", text.as_ref()).map_err(|e| CliError::input(format!("stdout: {e}")))
}

pub fn read_feeder(path: &Path) -> Result<FeederNetwork, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(parse_feeder(&text)?)
}

/// The configured study: user files when given, otherwise the synthetic one.
pub fn load_study(cfg: &StudyConfig) -> Result<Study, CliError> {
    match (&cfg.feeder, &cfg.loads, &cfg.flex) {
        (None, None, None) => {
            info!("no input files configured; using the synthetic study (seed {})", cfg.seed);
            let params = SyntheticStudyParams {
                seed: cfg.seed,
                horizon: cfg.horizon,
                connection_bus: cfg.connection_bus,
                calibrate: cfg.calibrate().unwrap_or_default(),
                shape: DailyShape::default(),
            };
            Ok(synthetic_study(&params)?)
        }
        (Some(f), Some(l), Some(x)) => {
            let network = read_feeder(f)?;
            let loads = load_profiles(open(l)?, &network).map_err(|e| CliError::input(format!("{}: {e}", l.display())))?;
            let (stamps, raw) = read_flexible_table(open(x)?).map_err(|e| CliError::input(format!("{}: {e}", x.display())))?;
            check_alignment(&loads, &stamps)?;
            let flex = normalize_flexible_profile(&raw, cfg.connection_bus)?;
            Ok(Study::assemble(network, loads, flex, cfg.calibrate().as_ref())?)
        }
        _ => Err(CliError::usage("feeder, loads and flex must be configured together")),
    }
}

fn baseline_error(study: &Study) -> Option<CliError> {
    let d = &study.residual.diagnostics;
    if d.is_empty() {
        return None;
    }
    let lines: Vec<String> = d.iter().map(|x| x.to_string()).collect();
    Some(CliError::new(
        ExitKind::BaselineInfeasible,
        format!("baseline infeasible at {} interval(s):\n{}", d.len(), lines.join("\n")),
    ))
}

pub fn validate(cfg: &StudyConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(cfg)?;
    if let Some(e) = baseline_error(&study) {
        return Err(e);
    }
    say(out, format!(
        "OK: {} buses, {} intervals, connection bus {}, p0_max {:.3} kW",
        study.network.num_buses(),
        study.horizon(),
        study.flex.connection_bus,
        study.network.base.pu_to_kw(study.network.substation.p0_max)
    ))
}

pub fn residual(cfg: &StudyConfig, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(cfg)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["t", "timestamp", "delta_p_kw", "binding"])?;
        for t in 0..study.horizon() {
            w.write_record([
                t.to_string(),
                study.loads.timestamps[t].format(TIMESTAMP_FORMAT).to_string(),
                study.network.base.pu_to_kw(study.residual.values[t]).to_string(),
                study.residual.binding[t].to_string(),
            ])?;
        }
        w.flush().map_err(|e| CliError::input(e.to_string()))?;
    }
    match dest {
        Some(p) => {
            create(p)?.write_all(&buf).map_err(|e| io_err(p, e))?;
            say(out, format!("wrote {}", p.display()))?;
        }
        None => out.write_all(&buf).map_err(|e| CliError::input(e.to_string()))?,
    }
    for d in &study.residual.diagnostics {
        say(out, format!("warning: {d}"))?;
    }
    Ok(())
}

fn hosting_spec(cfg: &StudyConfig, study: &Study) -> Result<HostingProblemSpec, CliError> {
    if let Some(e) = baseline_error(study) {
        return Err(e);
    }
    let mut spec = study.hosting_spec(cfg.risk_spec()?, cfg.lambda)?;
    spec.intervention_target = cfg.intervention_target;
    Ok(spec)
}

fn summary(sol: &SolutionFile) -> String {
    format!(
        "P = {:.6} kW, interventions = {}, CVaR = {:.6e} kW, status = {}",
        sol.p_kw, sol.intervention_count, sol.cvar, sol.status
    )
}

pub fn solve(cfg: &StudyConfig, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(cfg)?;
    let spec = hosting_spec(cfg, &study)?;
    let sol = solve_hosting_with(&spec, &cfg.hosting_options())?;
    let file = SolutionFile::build(&study, &spec, &sol);
    let path = dest.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("solution.json"));
    file.write(&path)?;
    say(out, summary(&file))?;
    say(out, format!("wrote {}", path.display()))
}

pub fn tune(cfg: &StudyConfig, target: Option<usize>, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(cfg)?;
    let mut spec = hosting_spec(cfg, &study)?;
    spec.intervention_target = target.or(cfg.intervention_target);
    if spec.intervention_target.is_none() {
        return Err(CliError::usage("tune needs an intervention target (--target or intervention_target)"));
    }
    let options = cfg.hosting_options();
    let mut settings = cfg.tune_settings();
    if cfg.tune.expand_bracket {
        settings = expand_lambda_bracket(&spec, &settings, &options, cfg.sweep.max_doublings)?;
    }
    let outcome = tune_lambda(&spec, &settings, &options)?;
    let file = SolutionFile::build(&study, &spec.with_lambda(outcome.lambda), &outcome.solution);
    let path = dest.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("solution.json"));
    file.write(&path)?;
    let history = path.with_file_name("tune_history.csv");
    let mut w = csv::Writer::from_writer(create(&history)?);
    w.write_record(["iteration", "lambda", "count", "p_kw"])?;
    for (i, step) in outcome.history.iter().enumerate() {
        w.write_record([
            i.to_string(),
            step.lambda.to_string(),
            step.count.map(|c| c.to_string()).unwrap_or_default(),
            step.p.map(|p| study.network.base.pu_to_kw(p).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&history, e))?;
    say(out, format!("lambda = {:.6e} after {} solves", outcome.lambda, outcome.history.len()))?;
    if let Some(note) = &outcome.note {
        say(out, format!("note: {note}"))?;
    }
    say(out, summary(&file))?;
    say(out, format!("wrote {} and {}", path.display(), history.display()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_tables(tables: &SweepTables, kw: impl Fn(f64) -> f64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let reference = kw(tables.p_inflexible).to_string();
    let budget_path = dir.join("gain_vs_budget.csv");
    let mut w = csv::Writer::from_writer(create(&budget_path)?);
    w.write_record(["rho", "budget", "time_pct", "lambda", "count", "p_kw", "p_inflexible_kw", "gain_pct", "note", "error"])?;
    for r in &tables.budget {
        w.write_record([
            r.rho.to_string(),
            r.budget.to_string(),
            r.time_pct.to_string(),
            opt(r.lambda),
            opt(r.count),
            opt(r.p.map(&kw)),
            reference.clone(),
            opt(r.gain_pct),
            r.note.clone().unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&budget_path, e))?;

    let alpha_path = dir.join("gain_vs_alpha.csv");
    let mut w = csv::Writer::from_writer(create(&alpha_path)?);
    w.write_record(["rho", "alpha", "count", "p_kw", "p_inflexible_kw", "gain_pct", "error"])?;
    for r in &tables.alpha {
        w.write_record([
            r.rho.to_string(),
            r.alpha.to_string(),
            opt(r.count),
            opt(r.p.map(&kw)),
            reference.clone(),
            opt(r.gain_pct),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&alpha_path, e))?;

    let lambda_path = dir.join("count_vs_lambda.csv");
    let mut w = csv::Writer::from_writer(create(&lambda_path)?);
    w.write_record(["rho", "lambda", "count", "p_kw", "error"])?;
    for r in &tables.lambda {
        w.write_record([r.rho.to_string(), r.lambda.to_string(), opt(r.count), opt(r.p.map(&kw)), r.error.clone().unwrap_or_default()])?;
    }
    w.flush().map_err(|e| io_err(&lambda_path, e))?;
    Ok(vec![budget_path, alpha_path, lambda_path])
}

pub fn sweep(cfg: &StudyConfig, dir: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(cfg)?;
    if let Some(e) = baseline_error(&study) {
        return Err(e);
    }
    let settings = cfg.sweep_settings(study.horizon())?;
    let tables = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::usage(e.to_string()))?
            .install(|| run_sweeps(&study, &settings))?,
        None => run_sweeps(&study, &settings)?,
    };
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let base = study.network.base;
    let paths = write_sweep_tables(&tables, |v| base.pu_to_kw(v), &dir)?;
    let failures = tables.budget.iter().filter(|r| r.error.is_some()).count()
        + tables.alpha.iter().filter(|r| r.error.is_some()).count()
        + tables.lambda.iter().filter(|r| r.error.is_some()).count();
    say(out, format!("inflexible capacity {:.6} kW; {failures} failed cell(s)", base.pu_to_kw(tables.p_inflexible)))?;
    for p in paths {
        say(out, format!("wrote {}", p.display()))?;
    }
    Ok(())
}

/// `(value, cumulative fraction)` steps of an empirical CDF.
pub type CdfSteps = Vec<(f64, f64)>;

/// VaR, CVaR and the empirical CDF of a solution's violation series, kW.
pub fn risk_table(sol: &SolutionFile) -> Result<(f64, f64, CdfSteps), CliError> {
    let zeta = sol.zeta();
    let var = empirical_var(&zeta, sol.alpha).map_err(|e| CliError::input(e.to_string()))?;
    let cvar = empirical_cvar(&zeta, sol.alpha).map_err(|e| CliError::input(e.to_string()))?;
    Ok((var, cvar, empirical_cdf(&zeta)))
}

fn write_risk<W: Write>(sol: &SolutionFile, w: W) -> Result<(), CliError> {
    let (var, cvar, cdf) = risk_table(sol)?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(w);
    w.write_record(["var", "cvar", "alpha"])?;
    w.write_record([var.to_string(), cvar.to_string(), sol.alpha.to_string()])?;
    w.write_record(["zeta_kw", "cdf"])?;
    for (v, p) in cdf {
        w.write_record([v.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| CliError::input(e.to_string()))
}

pub fn risk(solution: &Path, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let sol = SolutionFile::read(solution)?;
    match dest {
        Some(p) => {
            write_risk(&sol, create(p)?)?;
            say(out, format!("wrote {}", p.display()))
        }
        None => write_risk(&sol, out),
    }
}

/// Figure data for one solution file, written under `dir` with the file
/// stem as prefix.
pub fn report_one(solution: &Path, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let sol = SolutionFile::read(solution)?;
    let stem = solution.file_stem().and_then(|s| s.to_str()).unwrap_or("solution");

    let load_path = dir.join(format!("{stem}_load_vs_limit.csv"));
    let mut w = csv::Writer::from_writer(create(&load_path)?);
    w.write_record(["t", "timestamp", "baseline_kw", "before_kw", "after_kw", "limit_kw"])?;
    for e in &sol.schedule {
        let before = e.baseline_kw + sol.p_kw * e.l_hat;
        w.write_record([
            e.t.to_string(),
            e.timestamp.clone(),
            e.baseline_kw.to_string(),
            before.to_string(),
            (before - e.p_curt_kw).to_string(),
            sol.p0_max_kw.to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&load_path, e))?;

    let zeta_path = dir.join(format!("{stem}_zeta.csv"));
    let mut w = csv::Writer::from_writer(create(&zeta_path)?);
    w.write_record(["t", "timestamp", "zeta_kw", "p_curt_kw", "depth_bound_kw"])?;
    for e in &sol.schedule {
        w.write_record([
            e.t.to_string(),
            e.timestamp.clone(),
            e.zeta_kw.to_string(),
            e.p_curt_kw.to_string(),
            (sol.rho * sol.p_kw * e.l_hat).to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&zeta_path, e))?;

    let cdf_path = dir.join(format!("{stem}_zeta_cdf.csv"));
    let (var, cvar, cdf) = risk_table(&sol)?;
    let mut w = csv::Writer::from_writer(create(&cdf_path)?);
    w.write_record(["zeta_kw", "cdf", "var_kw", "cvar_kw", "alpha"])?;
    for (v, p) in cdf {
        w.write_record([v.to_string(), p.to_string(), var.to_string(), cvar.to_string(), sol.alpha.to_string()])?;
    }
    w.flush().map_err(|e| io_err(&cdf_path, e))?;
    Ok(vec![load_path, zeta_path, cdf_path])
}

pub fn report(solutions: &[PathBuf], dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    if solutions.is_empty() {
        return Err(CliError::usage("report needs at least one solution file"));
    }
    for s in solutions {
        for p in report_one(s, dir)? {
            say(out, format!("wrote {}", p.display()))?;
        }
    }
    Ok(())
}

/// Writes the calibrated synthetic study and a config pointing at it.
pub fn synth(cfg: &StudyConfig, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let params = SyntheticStudyParams {
        seed: cfg.seed,
        horizon: cfg.horizon,
        connection_bus: cfg.connection_bus,
        calibrate: cfg.calibrate().unwrap_or_default(),
        shape: DailyShape::default(),
    };
    let Study { network, loads, flex, .. } = synthetic_study(&params)?;

    let feeder_path = dir.join("feeder.json");
    let mut text = serde_json::to_string_pretty(&network.to_document()).expect("document serializes");
    text.push('\n');
    create(&feeder_path)?.write_all(text.as_bytes()).map_err(|e| io_err(&feeder_path, e))?;

    let loads_path = dir.join("loads.csv");
    loads.write_csv(&network.base, create(&loads_path)?)?;

    let flex_path = dir.join("flex.csv");
    // nominal 10 kW peak; only the shape matters once normalized
    let kw: Vec<f64> = flex.values.iter().map(|v| v * 10.0).collect();
    write_flexible_table(&loads.timestamps, &kw, create(&flex_path)?)?;

    let config = StudyConfig {
        feeder: Some("feeder.json".into()),
        loads: Some("loads.csv".into()),
        flex: Some("flex.csv".into()),
        output_dir: "out".into(),
        calibration: CalibrationConfig { enabled: false, ..cfg.calibration.clone() },
        ..cfg.clone()
    };
    let config_path = dir.join("study.json");
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    create(&config_path)?.write_all(text.as_bytes()).map_err(|e| io_err(&config_path, e))?;
    for p in [feeder_path, loads_path, flex_path, config_path] {
        say(out, format!("wrote {}", p.display()))?;
    }
    Ok(())
}
