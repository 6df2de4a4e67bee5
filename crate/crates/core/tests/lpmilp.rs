use gridclear::clearing::{clearing_program, Configuration};
use gridclear::fixtures;
use gridclear::ingest::{gen_synthetic, SyntheticSpec};
use gridclear::lpmilp::{
    enumerate_oracle, solve_lp, solve_milp, LinearProgram, Objective, Sense, SolveResult, Status, VarKind,
};
use proptest::prelude::*;

/// Dense description of a small LP: min/max c.x, A x <= b, 0 <= x <= u.
#[derive(Debug, Clone)]
struct Dense {
    maximize: bool,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    u: Vec<f64>,
}

impl Dense {
    fn program(&self, binaries: usize) -> LinearProgram {
        let sense = if self.maximize { Objective::Maximize } else { Objective::Minimize };
        let mut lp = LinearProgram::new(sense);
        let vars: Vec<_> = (0..self.c.len())
            .map(|j| {
                if j < binaries {
                    lp.add_var(format!("x{j}"), 0.0, 1.0, self.c[j], VarKind::Binary)
                } else {
                    lp.continuous(format!("x{j}"), 0.0, self.u[j], self.c[j])
                }
            })
            .collect();
        for (i, row) in self.a.iter().enumerate() {
            lp.add_row(format!("r{i}"), vars.iter().copied().zip(row.iter().copied()), Sense::Le, self.b[i]);
        }
        lp
    }
}

fn coef() -> impl Strategy<Value = f64> {
    (-5i32..=5).prop_map(f64::from)
}

fn dense(max_vars: usize, max_rows: usize) -> impl Strategy<Value = Dense> {
    (1..=max_vars, 1..=max_rows).prop_flat_map(|(n, m)| {
        (
            any::<bool>(),
            prop::collection::vec(coef(), n),
            prop::collection::vec(prop::collection::vec(coef(), n), m),
            prop::collection::vec((0i32..=10).prop_map(f64::from), m),
            prop::collection::vec((1i32..=6).prop_map(f64::from), n),
        )
            .prop_map(|(maximize, c, a, b, u)| Dense { maximize, c, a, b, u })
    })
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-9 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for k in col..n {
                    m[r][k] -= f * m[col][k];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Best objective over all basic feasible points (the LP is bounded and
/// contains the origin because b >= 0).
fn vertex_oracle(d: &Dense) -> f64 {
    let n = d.c.len();
    // every constraint as (coeffs, rhs) in <= form, including both bounds
    let mut cons: Vec<(Vec<f64>, f64)> = d.a.iter().cloned().zip(d.b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), d.u[j]));
        e[j] = -1.0;
        cons.push((e, 0.0));
    }
    let sign = if d.maximize { -1.0 } else { 1.0 };
    let mut best = f64::INFINITY;
    let k = cons.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let m = pick.iter().map(|&i| cons[i].0.clone()).collect();
        let r = pick.iter().map(|&i| cons[i].1).collect();
        if let Some(x) = solve_square(m, r) {
            let feasible = cons
                .iter()
                .all(|(row, rhs)| row.iter().zip(&x).map(|(a, xi)| a * xi).sum::<f64>() <= rhs + 1e-7);
            if feasible {
                let obj: f64 = d.c.iter().zip(&x).map(|(c, xi)| c * xi).sum();
                best = best.min(sign * obj);
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return sign * best;
            }
            i -= 1;
            if pick[i] < k - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn check_duality(lp: &LinearProgram, res: &SolveResult) {
    let y = res.duals.as_ref().unwrap();
    let d = res.reduced_costs.as_ref().unwrap();
    let min = lp.objective == Objective::Minimize;
    // c = A^T y + d
    for (j, v) in lp.vars.iter().enumerate() {
        let aty: f64 = lp
            .rows
            .iter()
            .zip(y)
            .map(|(row, yi)| row.terms.iter().filter(|(w, _)| w.0 == j).map(|(_, a)| a * yi).sum::<f64>())
            .sum();
        assert!((v.cost - aty - d[j]).abs() < 1e-6, "reduced cost of {}", v.name);
        // sign conditions in minimisation sense
        let dm = if min { d[j] } else { -d[j] };
        let x = res.x[j];
        if dm > 1e-6 {
            assert!((x - v.lower).abs() < 1e-6, "{} has positive reduced cost off its lower bound", v.name);
        }
        if dm < -1e-6 {
            assert!((x - v.upper).abs() < 1e-6, "{} has negative reduced cost off its upper bound", v.name);
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let slack = row.rhs - lp.row_activity(i, &res.x);
        let ym = if min { y[i] } else { -y[i] };
        if row.sense == Sense::Le {
            assert!(ym <= 1e-6, "row {i} dual has the wrong sign");
            assert!((ym * slack).abs() < 1e-6, "complementary slackness on row {i}");
        }
    }
    // strong duality: c.x = y.b + d.x
    let dual_obj: f64 =
        lp.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum::<f64>() + d.iter().zip(&res.x).map(|(a, b)| a * b).sum::<f64>();
    assert!(rel_close(res.objective, dual_obj, 1e-6), "{} vs {dual_obj}", res.objective);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_matches_vertex_enumeration(d in dense(3, 3)) {
        let lp = d.program(0);
        let res = solve_lp(&lp).unwrap();
        prop_assert_eq!(res.status, Status::Optimal);
        prop_assert!(lp.max_violation(&res.x) < 1e-7);
        let oracle = vertex_oracle(&d);
        prop_assert!(rel_close(res.objective, oracle, 1e-6), "{} vs {}", res.objective, oracle);
        check_duality(&lp, &res);
    }

    #[test]
    fn milp_matches_enumeration(d in dense(6, 4), k in 1usize..=6) {
        let lp = d.program(k.min(d.c.len()));
        let bb = solve_milp(&lp, 0.0).unwrap();
        let en = enumerate_oracle(&lp, 12).unwrap();
        prop_assert_eq!(bb.status, en.status);
        prop_assert!(rel_close(bb.objective, en.objective, 1e-6), "{} vs {}", bb.objective, en.objective);
        prop_assert!(lp.max_violation(&bb.x) < 1e-6);
    }
}

#[test]
fn infeasible_and_unbounded_programs() {
    let mut lp = LinearProgram::new(Objective::Minimize);
    let x = lp.continuous("x", 0.0, 1.0, 1.0);
    lp.add_row("r", [(x, 1.0)], Sense::Ge, 2.0);
    assert_eq!(solve_lp(&lp).unwrap().status, Status::Infeasible);

    let mut lp = LinearProgram::new(Objective::Maximize);
    let x = lp.continuous("x", 0.0, f64::INFINITY, 1.0);
    let y = lp.continuous("y", 0.0, f64::INFINITY, 0.0);
    lp.add_row("r", [(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
    assert_eq!(solve_lp(&lp).unwrap().status, Status::Unbounded);
}

#[test]
fn clearing_programs_match_enumeration() {
    let mut instances = vec![fixtures::ex_uc(), fixtures::ex_uc3(), fixtures::ex_b(), fixtures::ex_2n()];
    for seed in 0..10 {
        instances.push(gen_synthetic(&SyntheticSpec::new(seed, 3, 3, 3, 0.7)).unwrap());
    }
    let mut checked = 0;
    for inst in &instances {
        for config in [Configuration::National, Configuration::Nodal] {
            let lp = clearing_program(inst, &config, &[]).unwrap();
            if lp.binaries().len() > 12 {
                continue;
            }
            let bb = solve_milp(&lp, 0.0).unwrap();
            let en = enumerate_oracle(&lp, 12).unwrap();
            assert!(rel_close(bb.objective, en.objective, 1e-6), "{} vs {}", bb.objective, en.objective);
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} programs small enough");
}
