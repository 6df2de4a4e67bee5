//! Exhaustive enumeration of binary assignments, each reduced to an LP.

use super::simplex::{solve_relaxation, SimplexOptions};
use super::{LinearProgram, LpError, MilpInfo, Objective, SolveResult, Status, VarKind};

pub const DEFAULT_MAX_BINARIES: usize = 20;

/// Solves a MILP exactly by trying every binary assignment.
///
/// Ties keep the first assignment in counting order (binary 0 is the lowest bit).
pub fn enumerate_oracle(lp: &LinearProgram, max_binaries: usize) -> Result<SolveResult, LpError> {
    lp.validate()?;
    let binaries: Vec<usize> = lp
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    if binaries.len() > max_binaries {
        return Err(LpError::TooManyBinaries {
            count: binaries.len(),
            max: max_binaries,
        });
    }
    let sign = if lp.objective == Objective::Maximize { -1.0 } else { 1.0 };
    let opts = SimplexOptions::default();
    let mut work = lp.clone();
    for &j in &binaries {
        work.vars[j].kind = VarKind::Continuous;
    }
    let mut best: Option<SolveResult> = None;
    let mut iterations = 0;
    let mut unbounded = false;
    for mask in 0u64..(1u64 << binaries.len()) {
        let mut skip = false;
        for (bit, &j) in binaries.iter().enumerate() {
            let v = ((mask >> bit) & 1) as f64;
            if v < lp.vars[j].lower || v > lp.vars[j].upper {
                skip = true;
                break;
            }
            work.vars[j].lower = v;
            work.vars[j].upper = v;
        }
        if skip {
            continue;
        }
        let res = solve_relaxation(&work, &opts)?;
        iterations += res.iterations;
        match res.status {
            Status::Optimal => {
                let better = best
                    .as_ref()
                    .map_or(true, |b| sign * res.objective < sign * b.objective - 1e-12);
                if better {
                    best = Some(res);
                }
            }
            Status::Unbounded => unbounded = true,
            _ => {}
        }
    }
    if unbounded {
        let mut r = SolveResult::without_solution(Status::Unbounded);
        r.iterations = iterations;
        return Ok(r);
    }
    match best {
        None => {
            let mut r = SolveResult::without_solution(Status::Infeasible);
            r.iterations = iterations;
            Ok(r)
        }
        Some(mut r) => {
            if !binaries.is_empty() {
                r.duals = None;
                r.reduced_costs = None;
                r.milp = Some(MilpInfo {
                    incumbent: r.objective,
                    best_bound: r.objective,
                    gap: 0.0,
                    nodes: 1usize << binaries.len(),
                });
            }
            r.iterations = iterations;
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpmilp::{solve_lp, Sense};

    #[test]
    fn zero_binaries_equals_lp() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let a = lp.continuous("a", 0.0, 50.0, 10.0);
        let b = lp.continuous("b", 0.0, 100.0, 30.0);
        lp.add_row("bal", [(a, 1.0), (b, 1.0)], Sense::Eq, 80.0);
        let o = enumerate_oracle(&lp, 0).unwrap();
        let s = solve_lp(&lp).unwrap();
        assert_eq!(o.x, s.x);
        assert_eq!(o.objective, s.objective);
        assert_eq!(o.duals, s.duals);
    }

    #[test]
    fn refuses_large_problems() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        for i in 0..3 {
            lp.binary(format!("u{i}"), 1.0);
        }
        assert_eq!(
            enumerate_oracle(&lp, 2),
            Err(LpError::TooManyBinaries { count: 3, max: 2 })
        );
    }
}
