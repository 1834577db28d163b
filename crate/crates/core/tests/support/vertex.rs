//! Brute-force LP oracle shared by the solver tests and the acceptance run.

use flexhost::lpcore::{LpProblem, LpRow};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Hyperplane `a'x = b` used when enumerating vertices.
struct Plane {
    a: Vec<f64>,
    b: f64,
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[i][k] -= f * a[col][k];
                    }
                    b[i] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Best objective over all basic feasible points of a bounded LP.
pub fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
    let n = lp.num_variables();
    let mut planes = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coefficients {
            a[j] += v;
        }
        planes.push(Plane { a, b: row.rhs });
    }
    for j in 0..n {
        for bound in [lp.lower[j], lp.upper[j]] {
            if bound.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                planes.push(Plane { a, b: bound });
            }
        }
    }
    let mut best: Option<f64> = None;
    combinations(planes.len(), n, 0, &mut Vec::new(), &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].a.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].b).collect();
        if let Some(x) = solve_square(a, b) {
            if lp.max_violation(&x) <= 1e-9 {
                let obj = lp.objective_value(&x);
                best = Some(best.map_or(obj, |v: f64| v.max(obj)));
            }
        }
    });
    best
}

/// Boxed random LP that contains `x0` in its feasible set.
pub fn random_small_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=8);
    let mut lp = LpProblem::new();
    let mut x0 = Vec::new();
    for j in 0..n {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.5..4.0);
        lp.add_variable(format!("x{j}"), rng.gen_range(-2.0..2.0), lo, hi);
        x0.push(rng.gen_range(lo..hi));
    }
    for _ in 0..m {
        let coefficients: Vec<(usize, f64)> =
            (0..n).filter_map(|j| rng.gen_bool(0.8).then(|| (j, rng.gen_range(-3.0..3.0)))).collect();
        let lhs: f64 = coefficients.iter().map(|&(j, a)| a * x0[j]).sum();
        if rng.gen_bool(0.15) {
            lp.add_row(LpRow::eq(coefficients, lhs));
        } else {
            lp.add_row(LpRow::le(coefficients, lhs + rng.gen_range(0.0..1.5)));
        }
    }
    lp
}
