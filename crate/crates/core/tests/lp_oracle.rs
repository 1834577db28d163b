//! Simplex results checked against brute-force vertex enumeration.

use flexhost::lpcore::{solve_lp, LpProblem, LpRow, LpStatus, Relation, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "support/vertex.rs"]
mod vertex;
use vertex::{random_small_lp, vertex_enumeration};

const INF: f64 = f64::INFINITY;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn matches_vertex_enumeration_on_random_small_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..100 {
        let lp = random_small_lp(&mut rng);
        let expected = vertex_enumeration(&lp).expect("feasible by construction");
        let sol = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
        assert!(rel_close(sol.objective, expected, 1e-8), "case {case}: simplex {} vs oracle {}", sol.objective, expected);
        assert!(sol.max_violation <= 1e-8, "case {case}: violation {}", sol.max_violation);
    }
}

#[test]
fn hand_polytope_matches_enumeration() {
    let mut lp = LpProblem::new();
    lp.add_variable("x", 1.0, 0.0, INF);
    lp.add_variable("y", 1.0, 0.0, INF);
    lp.add_row(LpRow::le(vec![(0, 1.0), (1, 1.0)], 1.0));
    lp.add_row(LpRow::le(vec![(0, 1.0)], 0.4));
    // the oracle needs finite planes only; x,y >= 0 supply the rest
    assert_eq!(vertex_enumeration(&lp), Some(1.0));
    let sol = solve_lp(&lp, &SolverSettings::default()).unwrap();
    assert!((sol.objective - 1.0).abs() < 1e-12);
}

/// Larger feasible-by-construction LPs with free and half-bounded columns.
#[test]
fn random_feasible_lps_solve_within_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..40 {
        let n = rng.gen_range(5..30);
        let m = rng.gen_range(3..40);
        let mut lp = LpProblem::new();
        let mut x0 = Vec::new();
        for j in 0..n {
            let kind = rng.gen_range(0..3);
            let (lo, hi) = match kind {
                0 => (0.0, INF),
                1 => (-INF, INF),
                _ => (-1.0, 2.0),
            };
            lp.add_variable(format!("x{j}"), rng.gen_range(-1.0..1.0), lo, hi);
            x0.push(if kind == 1 { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..1.0) });
        }
        // keep everything bounded: +-x_j <= 5 for every column
        for j in 0..n {
            lp.add_row(LpRow::le(vec![(j, 1.0)], 5.0));
            lp.add_row(LpRow::le(vec![(j, -1.0)], 5.0));
        }
        for _ in 0..m {
            let coefficients: Vec<(usize, f64)> =
                (0..n).filter_map(|j| rng.gen_bool(0.3).then(|| (j, rng.gen_range(-2.0..2.0)))).collect();
            let lhs: f64 = coefficients.iter().map(|&(j, a)| a * x0[j]).sum();
            if rng.gen_bool(0.1) {
                lp.add_row(LpRow::eq(coefficients, lhs));
            } else {
                lp.add_row(LpRow::le(coefficients, lhs + rng.gen_range(0.0..1.0)));
            }
        }
        let sol = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
        assert!(sol.max_violation <= 1e-8, "case {case}: {}", sol.max_violation);

        // positive objective scaling keeps the optimum set
        let c = rng.gen_range(0.1..20.0);
        let mut scaled = lp.clone();
        scaled.objective.iter_mut().for_each(|v| *v *= c);
        let sol2 = solve_lp(&scaled, &SolverSettings::default()).unwrap();
        assert_eq!(sol2.status, LpStatus::Optimal);
        assert!(sol2.max_violation <= 1e-8);
        let reevaluated = lp.objective_value(&sol2.primal);
        assert!(rel_close(sol2.objective / c, sol.objective, 1e-8), "case {case}");
        assert!(rel_close(reevaluated, sol.objective, 1e-8), "case {case}");
    }
}

/// Beale's example cycles under textbook Dantzig pricing with lowest-index
/// ties; the Bland fallback must still terminate at the optimum 1.25.
#[test]
fn beale_cycling_example_terminates() {
    for streak in [1, 2, 50] {
        let mut lp = LpProblem::new();
        for (name, c) in [("x4", 0.75), ("x5", -20.0), ("x6", 0.5), ("x7", -6.0)] {
            lp.add_variable(name, c, 0.0, INF);
        }
        lp.add_row(LpRow::le(vec![(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], 0.0));
        lp.add_row(LpRow::le(vec![(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], 0.0));
        lp.add_row(LpRow::le(vec![(2, 1.0)], 1.0));
        let settings = SolverSettings { degeneracy_streak: streak, ..Default::default() };
        let sol = solve_lp(&lp, &settings).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "streak {streak}");
        assert!((sol.objective - 1.25).abs() < 1e-12, "streak {streak}: {}", sol.objective);
        if streak == 1 {
            assert!(sol.bland_engaged);
        }
    }
}

#[test]
fn highly_degenerate_assignment_lp_terminates() {
    // 6x6 assignment polytope: every vertex is heavily degenerate.
    let k = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lp = LpProblem::new();
    for i in 0..k {
        for j in 0..k {
            lp.add_variable(format!("a{i}{j}"), rng.gen_range(0..5) as f64, 0.0, INF);
        }
    }
    for i in 0..k {
        lp.add_row(LpRow::eq((0..k).map(|j| (i * k + j, 1.0)).collect(), 1.0));
        lp.add_row(LpRow::eq((0..k).map(|j| (j * k + i, 1.0)).collect(), 1.0));
    }
    let settings = SolverSettings { degeneracy_streak: 3, ..Default::default() };
    let sol = solve_lp(&lp, &settings).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(sol.max_violation < 1e-9);
    // integral optimum: brute-force over all 720 permutations
    let costs = &lp.objective;
    let mut best = f64::NEG_INFINITY;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|i| costs[i * k + p[i]]).sum());
    });
    assert!((sol.objective - best).abs() < 1e-9);
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}

#[test]
fn identical_input_gives_identical_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lp = random_small_lp(&mut rng);
    let a = solve_lp(&lp, &SolverSettings::default()).unwrap();
    let b = solve_lp(&lp.clone(), &SolverSettings::default()).unwrap();
    assert_eq!(a, b);
    assert!(matches!(lp.rows[0].relation, Relation::Le | Relation::Eq));
}
