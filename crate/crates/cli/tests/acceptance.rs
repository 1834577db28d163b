//! Acceptance run: one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use flexhost::capacity::{residual_capacity, voltages, Binding, ResidualCapacitySeries};
use flexhost::feeder::{impedance_matrices, sensitivity_matrix, Bus, FeederNetwork, Line, PerUnitBase, Substation};
use flexhost::hosting::{
    assemble_hosting_lp, expand_lambda_bracket, hosting_bisection_oracle, solve_hosting, tune_lambda, HostingError,
    HostingProblemSpec, HostingSolution,
};
use flexhost::lpcore::{solve_lp, LpProblem, LpRow, LpStatus, SolverSettings};
use flexhost::risk::{empirical_cvar, empirical_var, RiskSpec};
use flexhost::study::Study;
use flexhost::sweep::run_sweeps;
use flexhost::timeseries::{synthetic_timestamps, FlexibleProfile, LoadDataset};
use flexhost_cli::commands;
use flexhost_cli::config::StudyConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/support/vertex.rs"]
mod vertex;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn spec(dp: &[f64], l: &[f64], alpha: f64, epsilon: f64, rho: f64, lambda: f64) -> HostingProblemSpec {
    HostingProblemSpec::new(
        ResidualCapacitySeries::from_values(dp.to_vec(), 1),
        FlexibleProfile { values: l.to_vec(), connection_bus: 1 },
        RiskSpec::new(alpha, epsilon, rho).unwrap(),
        lambda,
    )
    .unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, t: usize) -> (Vec<f64>, Vec<f64>) {
    let dp: Vec<f64> = (0..t).map(|_| rng.gen_range(0.05..1.0)).collect();
    let mut l: Vec<f64> = (0..t).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..=1.0) }).collect();
    let k = rng.gen_range(0..t);
    l[k] = l[k].max(0.5);
    (dp, l)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let t = [24, 96][case % 2];
        let rho = [0.0, 0.1, 0.2][rng.gen_range(0..3)];
        let alpha = [0.9, 0.99][rng.gen_range(0..2)];
        let epsilon = [0.0, 1e-3][rng.gen_range(0..2)];
        let (dp, l) = random_instance(&mut rng, t);
        let sol = solve_hosting(&spec(&dp, &l, alpha, epsilon, rho, 0.0)).map_err(|e| format!("case {case}: {e}"))?;
        let risk = RiskSpec::new(alpha, epsilon, rho).unwrap();
        let oracle = hosting_bisection_oracle(&dp, &l, &risk, None).ok_or(format!("case {case}: oracle infeasible"))?;
        let r = rel(sol.p, oracle);
        worst = worst.max(r);
        check(r <= 1e-6, || format!("case {case}: LP {} vs oracle {oracle}", sol.p))?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("50 instances, worst relative gap {worst:.1e}, {secs:.2} s"))
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let (dp, l) = random_instance(&mut rng, 24);
        let ratio = |scale: f64| (0..24).filter(|&t| l[t] > 0.0).map(|t| dp[t] / (scale * l[t])).fold(f64::INFINITY, f64::min);
        let p0 = solve_hosting(&spec(&dp, &l, 0.9, 0.0, 0.0, 0.0)).map_err(|e| e.to_string())?.p;
        let rho = rng.gen_range(0.05..0.9);
        // (1 - alpha) T = 0.24 < 1: the tail is a single interval
        let p1 = solve_hosting(&spec(&dp, &l, 0.99, 0.0, rho, 0.0)).map_err(|e| e.to_string())?.p;
        for (got, want) in [(p0, ratio(1.0)), (p1, ratio(1.0 - rho))] {
            let r = rel(got, want);
            worst = worst.max(r);
            check(r <= 1e-9, || format!("case {case}: {got} vs closed form {want}"))?;
        }
    }
    Ok(format!("40 solves, worst relative gap {worst:.1e}"))
}

fn chain(v_min_squared: f64) -> FeederNetwork {
    FeederNetwork {
        buses: (1..=2).map(|id| Bus { id, v_min_squared, eta: 0.0, has_load: true }).collect(),
        lines: vec![Line { from: 0, to: 1, r: 0.01, x: 0.01 }, Line { from: 1, to: 2, r: 0.02, x: 0.02 }],
        substation: Substation { bus_id: 0, v0_squared: 1.0, p0_max: 0.5 },
        base: PerUnitBase { s_base_kva: 1000.0, v_base_kv: 1.0 },
    }
}

fn lindistflow() -> Outcome {
    let net = chain(0.9025);
    let m = impedance_matrices(&net).map_err(|e| e.to_string())?;
    let v = voltages(&net, &m, &[0.1, 0.1], &[0.0, 0.0]).map_err(|e| e.to_string())?;
    check((v[0] - 0.996).abs() <= 1e-9 && (v[1] - 0.992).abs() <= 1e-9, || format!("V = {v:?}"))?;

    let data = LoadDataset {
        timestamps: synthetic_timestamps(1, 15),
        interval_minutes: 15,
        bus_order: vec![1, 2],
        active: vec![vec![0.1, 0.1]],
    };
    let flex = FlexibleProfile { values: vec![1.0], connection_bus: 2 };
    let mut got = Vec::new();
    for (floor, want, binding) in [(0.9025, 0.3, Binding::Transformer), (0.99, (1.0 - 0.99 - 0.008) / 0.06, Binding::Voltage(2))] {
        let net = chain(floor);
        let z = sensitivity_matrix(&impedance_matrices(&net).unwrap(), &net.etas()).unwrap();
        let res = residual_capacity(&net, &z, &data, &flex).map_err(|e| e.to_string())?;
        check((res.values[0] - want).abs() <= 1e-9 && res.binding[0] == binding, || {
            format!("floor {floor}: {} ({}) vs {want} ({binding})", res.values[0], res.binding[0])
        })?;
        got.push(format!("{:.5} {}", res.values[0], res.binding[0]));
    }
    Ok(format!("V = (0.996, 0.992); dP = {}", got.join(", ")))
}

/// Threshold form of CVaR minimized by scanning every sample.
fn ru_cvar(z: &[f64], alpha: f64) -> f64 {
    let w = 1.0 / ((1.0 - alpha) * z.len() as f64);
    z.iter().map(|&g| g + w * z.iter().map(|&v| (v - g).max(0.0)).sum::<f64>()).fold(f64::INFINITY, f64::min)
}

fn cvar_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for alpha in [0.9, 0.95, 0.99] {
        let z: Vec<f64> = (0..1000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (c, o) = (empirical_cvar(&z, alpha).unwrap(), ru_cvar(&z, alpha));
        worst = worst.max((c - o).abs());
        check((c - o).abs() <= 1e-12 * o.abs().max(1.0), || format!("alpha {alpha}: {c} vs {o}"))?;
    }
    for series in 0..100 {
        let n = rng.gen_range(1..300);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let alpha = rng.gen_range(0.5..0.995);
        let c = empirical_cvar(&z, alpha).unwrap();
        let (shift, scale) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.1..10.0));
        let shifted = empirical_cvar(&z.iter().map(|v| v + shift).collect::<Vec<_>>(), alpha).unwrap();
        let scaled = empirical_cvar(&z.iter().map(|v| v * scale).collect::<Vec<_>>(), alpha).unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let ok = (shifted - c - shift).abs() <= 1e-9
            && (scaled - c * scale).abs() <= 1e-9 * scale.max(1.0)
            && c >= empirical_var(&z, alpha).unwrap() - 1e-12
            && c >= mean - 1e-12;
        check(ok, || format!("coherence fails on series {series}"))?;
    }
    Ok(format!("1000-sample gap {worst:.1e}; coherence on 100 series"))
}

fn guarantees(sol: &HostingSolution, dp: &[f64], alpha: f64, epsilon: f64) -> Result<(), String> {
    let c = empirical_cvar(&sol.zeta, alpha).unwrap();
    check(c <= epsilon + 1e-7, || format!("CVaR {c} above {epsilon}"))?;
    for t in 0..dp.len() {
        check(sol.served[t] <= dp[t] + 1e-9, || format!("served {} above dP {} at t={t}", sol.served[t], dp[t]))?;
    }
    Ok(())
}

fn ex_post(study: &Study) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut n = 0;
    for case in 0..60 {
        let t = [24, 96, 400][case % 3];
        let (dp, l) = random_instance(&mut rng, t);
        let (alpha, rho) = (rng.gen_range(0.8..0.995), rng.gen_range(0.0..0.6));
        let epsilon = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.01) };
        let lambda = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..5.0) };
        match solve_hosting(&spec(&dp, &l, alpha, epsilon, rho, lambda)) {
            Ok(sol) => guarantees(&sol, &dp, alpha, epsilon).map_err(|e| format!("case {case}: {e}"))?,
            Err(HostingError::Unbounded) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        }
        n += 1;
    }
    for (rho, alpha, lambda) in [(0.05, 0.99, 0.0), (0.1, 0.95, 0.5), (0.2, 0.9, 2.0)] {
        let s = study.hosting_spec(RiskSpec::new(alpha, 0.0, rho).unwrap(), lambda).map_err(|e| e.to_string())?;
        let sol = solve_hosting(&s).map_err(|e| e.to_string())?;
        guarantees(&sol, &study.residual.values, alpha, 0.0).map_err(|e| format!("study rho {rho}: {e}"))?;
        n += 1;
    }
    Ok(format!("{n} optimal solutions checked"))
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
}

fn trends(study: &Study) -> Outcome {
    let cfg = StudyConfig::default();
    let settings = cfg.sweep_settings(study.horizon()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let tables = run_sweeps(study, &settings).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let failed = tables.budget.iter().filter(|r| r.error.is_some()).count()
        + tables.alpha.iter().filter(|r| r.error.is_some()).count()
        + tables.lambda.iter().filter(|r| r.error.is_some()).count();
    check(failed == 0, || format!("{failed} sweep cells failed"))?;

    let mut saturation = String::new();
    for &rho in &settings.rhos {
        let by_alpha: Vec<f64> = tables.alpha.iter().filter(|r| r.rho == rho).map(|r| r.p.unwrap()).collect();
        check(nonincreasing(&by_alpha), || format!("(a) P not nonincreasing in alpha at rho {rho}: {by_alpha:?}"))?;
        let gains: Vec<f64> = tables.budget.iter().filter(|r| r.rho == rho).map(|r| r.gain_pct.unwrap()).collect();
        let neg: Vec<f64> = gains.iter().map(|g| -g).collect();
        check(nonincreasing(&neg), || format!("(c) gain not nondecreasing in budget at rho {rho}: {gains:?}"))?;
        if rho == 0.05 {
            let (a, b) = (gains[gains.len() - 2], gains[gains.len() - 1]);
            check((a - b).abs() <= 0.01 * a.abs().max(b.abs()), || format!("(c) no saturation at rho 0.05: {gains:?}"))?;
            saturation = format!("{a:.3}% / {b:.3}%");
        }
        let counts: Vec<f64> = tables.lambda.iter().filter(|r| r.rho == rho).map(|r| r.count.unwrap() as f64).collect();
        check(nonincreasing(&counts), || format!("(d) count not nonincreasing in lambda at rho {rho}: {counts:?}"))?;
    }
    for &alpha in &settings.alphas {
        let by_rho: Vec<f64> = tables.alpha.iter().filter(|r| r.alpha == alpha).map(|r| -r.p.unwrap()).collect();
        check(nonincreasing(&by_rho), || format!("(b) P not nondecreasing in rho at alpha {alpha}"))?;
    }
    check(secs < 900.0, || format!("sweep took {secs:.1} s"))?;
    let kw = study.network.base.pu_to_kw(tables.p_inflexible);
    Ok(format!("P_inflexible {kw:.2} kW, saturation at rho 0.05 {saturation}, sweep {secs:.1} s"))
}

fn algorithm_one(study: &Study) -> Outcome {
    let cfg = StudyConfig::default();
    let options = cfg.hosting_options();
    let base = study.hosting_spec(cfg.risk_spec().unwrap(), 0.0).map_err(|e| e.to_string())?;
    // reachable counts sampled along the regularization path
    let mut staircase = BTreeSet::new();
    for k in 0..=60 {
        let lambda = if k == 0 { 0.0 } else { 10f64.powf(-3.0 + 6.0 * (k - 1) as f64 / 59.0) };
        if let Ok(sol) = solve_hosting(&base.with_lambda(lambda)) {
            staircase.insert(sol.intervention_count);
        }
    }
    let t = study.horizon() as f64;
    let mut report = Vec::new();
    let mut vars = Vec::new();
    for target in [0, (0.001 * t).round() as usize, (0.01 * t).round() as usize] {
        let mut spec = base.clone();
        spec.intervention_target = Some(target);
        let settings = expand_lambda_bracket(&spec, &cfg.tune_settings(), &options, cfg.sweep.max_doublings)
            .map_err(|e| format!("target {target}: {e}"))?;
        let out = tune_lambda(&spec, &settings, &options).map_err(|e| format!("target {target}: {e}"))?;
        let got = out.solution.intervention_count;
        let below = staircase.range(..=target).next_back().copied().unwrap_or(0);
        check(got <= target && (got == target || got >= below), || {
            format!("target {target}: count {got}, sampled staircase below target reaches {below}")
        })?;
        check(out.history.len() <= 40, || format!("target {target}: {} iterations", out.history.len()))?;
        report.push(format!("{target}->{got} in {}", out.history.len()));
        vars.push(out.solution.var_of_zeta);
    }
    Ok(format!("target->count: {}; VaR {:?}", report.join(", "), vars.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()))
}

fn tuned_var_nonpositive(study: &Study) -> Outcome {
    let cfg = StudyConfig::default();
    let options = cfg.hosting_options();
    let mut spec = study.hosting_spec(cfg.risk_spec().unwrap(), 0.0).map_err(|e| e.to_string())?;
    spec.intervention_target = Some((0.001 * study.horizon() as f64).round() as usize);
    let settings = expand_lambda_bracket(&spec, &cfg.tune_settings(), &options, 30).map_err(|e| e.to_string())?;
    let out = tune_lambda(&spec, &settings, &options).map_err(|e| e.to_string())?;
    let var = empirical_var(&out.solution.zeta, 0.99).unwrap();
    check(var <= 0.0, || format!("VaR {var}"))?;
    Ok(format!("alpha 0.99 VaR {var:.3e} p.u. on the tuned study"))
}

fn lp_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..100 {
        let lp = vertex::random_small_lp(&mut rng);
        let want = vertex::vertex_enumeration(&lp).ok_or("oracle found no vertex")?;
        let sol = solve_lp(&lp, &SolverSettings::default()).map_err(|e| e.to_string())?;
        check(sol.status == LpStatus::Optimal && (sol.objective - want).abs() <= 1e-8 * want.abs().max(1.0), || {
            format!("case {case}: {} vs {want}", sol.objective)
        })?;
    }
    let lp = assemble_hosting_lp(&spec(&[0.3, 0.2, 0.5], &[1.0, 0.5, 0.2], 0.9, 10.0, 1.0, 0.0)).map_err(|e| e.to_string())?;
    let sol = solve_lp(&lp, &SolverSettings::default()).map_err(|e| e.to_string())?;
    check(sol.status == LpStatus::Unbounded, || format!("rho = 1 gave {}", sol.status))?;
    check(
        matches!(solve_hosting(&spec(&[0.3, 0.2, 0.5], &[1.0, 0.5, 0.2], 0.9, 10.0, 1.0, 0.0)), Err(HostingError::Unbounded)),
        || "rho = 1 not reported unbounded".into(),
    )?;

    // Beale's cycling example
    let mut lp = LpProblem::new();
    for (name, c) in [("x4", 0.75), ("x5", -20.0), ("x6", 0.5), ("x7", -6.0)] {
        lp.add_variable(name, c, 0.0, f64::INFINITY);
    }
    lp.add_row(LpRow::le(vec![(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], 0.0));
    lp.add_row(LpRow::le(vec![(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], 0.0));
    lp.add_row(LpRow::le(vec![(2, 1.0)], 1.0));
    let sol = solve_lp(&lp, &SolverSettings { degeneracy_streak: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    check(sol.status == LpStatus::Optimal && (sol.objective - 1.25).abs() < 1e-12 && sol.bland_engaged, || {
        format!("degenerate LP: {} {} bland {}", sol.status, sol.objective, sol.bland_engaged)
    })?;
    Ok(format!("100 random LPs match; unbounded reported; degenerate LP optimal after {} pivots", sol.iterations))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = StudyConfig { horizon: 672, ..StudyConfig::default() };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        commands::solve(&cfg, Some(p), &mut std::io::sink()).map_err(|e| e.to_string())?;
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    check(x == y, || "solution files differ".into())?;
    Ok(format!("{} identical bytes", x.len()))
}

fn main() {
    let study = commands::load_study(&StudyConfig::default()).expect("bundled study");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 oracle equivalence", Box::new(oracle_equivalence)),
        ("2 closed forms", Box::new(closed_forms)),
        ("3 LinDistFlow hand cases", Box::new(lindistflow)),
        ("4 CVaR correctness", Box::new(cvar_correctness)),
        ("5 ex-post risk guarantee", Box::new(|| ex_post(&study))),
        ("5b tuned VaR non-positive", Box::new(|| tuned_var_nonpositive(&study))),
        ("6 trend reproduction", Box::new(|| trends(&study))),
        ("7 lambda tuning", Box::new(|| algorithm_one(&study))),
        ("8 LP solver", Box::new(lp_solver)),
        ("9 determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name}: {why} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
