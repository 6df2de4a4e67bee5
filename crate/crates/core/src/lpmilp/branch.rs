//! Best-bound branch and bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::debug;

use super::simplex::{solve_relaxation, SimplexOptions};
use super::{LinearProgram, LpError, MilpInfo, Objective, SolveResult, Status, VarKind};

#[derive(Debug, Clone, Copy)]
pub struct MilpOptions {
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    pub node_limit: usize,
    pub int_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap: 0.05,
            node_limit: 100_000,
            int_tol: 1e-6,
            simplex: SimplexOptions::default(),
        }
    }
}

pub fn solve_milp(lp: &LinearProgram, gap: f64) -> Result<SolveResult, LpError> {
    solve_milp_with(
        lp,
        &MilpOptions {
            gap,
            ..MilpOptions::default()
        },
    )
}

struct Node {
    /// Bound in minimisation sense.
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound (then oldest node) wins
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn gap_of(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-9)).max(0.0)
}

pub fn solve_milp_with(lp: &LinearProgram, opts: &MilpOptions) -> Result<SolveResult, LpError> {
    lp.validate()?;
    if !(0.0..=1.0).contains(&opts.gap) {
        return Err(LpError::Malformed(format!("MIP gap {} outside [0, 1]", opts.gap)));
    }
    super::maybe_dump(lp, "milp");
    let sign = if lp.objective == Objective::Maximize { -1.0 } else { 1.0 };
    let binaries: Vec<usize> = lp
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();

    let mut work = lp.clone();
    let solve_node = |work: &mut LinearProgram, fixes: &[(usize, f64)]| -> Result<SolveResult, LpError> {
        for &j in &binaries {
            work.vars[j].lower = lp.vars[j].lower;
            work.vars[j].upper = lp.vars[j].upper;
        }
        for &(j, v) in fixes {
            work.vars[j].lower = v;
            work.vars[j].upper = v;
        }
        solve_relaxation(work, &opts.simplex)
    };

    let fractional = |x: &[f64]| -> Option<usize> {
        let mut pick = None;
        let mut best = opts.int_tol;
        for &j in &binaries {
            let f = (x[j] - x[j].round()).abs();
            if f > best + 1e-12 {
                best = f;
                pick = Some(j);
            }
        }
        pick
    };

    let root = solve_node(&mut work, &[])?;
    let mut iterations = root.iterations;
    match root.status {
        Status::Optimal => {}
        Status::Infeasible | Status::Unbounded | Status::NodeLimit => {
            let mut r = SolveResult::without_solution(root.status);
            r.iterations = iterations;
            return Ok(r);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 1usize;

    let mut consider = |x: Vec<f64>, obj: f64, fixes: Vec<(usize, f64)>, heap: &mut BinaryHeap<Node>, incumbent: &mut Option<(f64, Vec<f64>)>| {
        let bound = sign * obj;
        if let Some((inc, _)) = incumbent {
            if bound >= *inc - prune_tol(*inc, opts.gap) {
                return;
            }
        }
        if fractional(&x).is_none() {
            let better = incumbent.as_ref().map_or(true, |(inc, _)| bound < *inc);
            if better {
                debug!("new incumbent {bound}");
                *incumbent = Some((bound, x));
            }
            return;
        }
        heap.push(Node {
            bound,
            id: next_id,
            fixes,
            x,
        });
        next_id += 1;
    };
    consider(root.x, root.objective, Vec::new(), &mut heap, &mut incumbent);

    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= *inc - prune_tol(*inc, opts.gap) {
                // best-first: every remaining node is at least as bad
                heap.clear();
                heap.push(node);
                break;
            }
        }
        if nodes >= opts.node_limit {
            hit_limit = true;
            heap.push(node);
            break;
        }
        let j = fractional(&node.x).expect("queued nodes are fractional");
        for v in [0.0, 1.0] {
            let mut fixes = node.fixes.clone();
            fixes.push((j, v));
            let res = solve_node(&mut work, &fixes)?;
            nodes += 1;
            iterations += res.iterations;
            if res.status == Status::Optimal {
                consider(res.x, res.objective, fixes, &mut heap, &mut incumbent);
            }
        }
    }

    let open_bound = heap.peek().map(|n| n.bound);
    match incumbent {
        None => {
            let status = if hit_limit { Status::NodeLimit } else { Status::Infeasible };
            let mut r = SolveResult::without_solution(status);
            r.iterations = iterations;
            Ok(r)
        }
        Some((inc, mut x)) => {
            for &j in &binaries {
                x[j] = x[j].round();
            }
            let best_bound = open_bound.map_or(inc, |b| b.min(inc));
            let gap = gap_of(inc, best_bound);
            let status = if hit_limit && gap > opts.gap + 1e-9 {
                Status::NodeLimit
            } else {
                Status::Optimal
            };
            let objective = lp.evaluate(&x);
            Ok(SolveResult {
                status,
                x,
                objective,
                duals: None,
                reduced_costs: None,
                milp: Some(MilpInfo {
                    incumbent: sign * inc,
                    best_bound: sign * best_bound,
                    gap,
                    nodes,
                }),
                iterations,
            })
        }
    }
}

fn prune_tol(incumbent: f64, gap: f64) -> f64 {
    (gap * incumbent.abs()).max(1e-9 * incumbent.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpmilp::{enumerate_oracle, Sense};

    fn uc_instance() -> LinearProgram {
        // one hour, demand 60; G1 10/MWh cap 50; G2 20/MWh + 100 fixed, cap 50
        let mut lp = LinearProgram::new(Objective::Minimize);
        let y1 = lp.continuous("y1", 0.0, f64::INFINITY, 10.0);
        let y2 = lp.continuous("y2", 0.0, f64::INFINITY, 20.0);
        let u1 = lp.binary("u1", 0.0);
        let u2 = lp.binary("u2", 100.0);
        lp.add_row("cap1", [(y1, 1.0), (u1, -50.0)], Sense::Le, 0.0);
        lp.add_row("cap2", [(y2, 1.0), (u2, -50.0)], Sense::Le, 0.0);
        lp.add_row("bal", [(y1, 1.0), (y2, 1.0)], Sense::Eq, 60.0);
        lp
    }

    #[test]
    fn small_uc_matches_enumeration() {
        let lp = uc_instance();
        let res = solve_milp(&lp, 0.0).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 800.0).abs() < 1e-6);
        assert_eq!(res.x[2], 1.0);
        assert_eq!(res.x[3], 1.0);
        let oracle = enumerate_oracle(&lp, 20).unwrap();
        assert!((oracle.objective - res.objective).abs() < 1e-6);
        assert!(res.duals.is_none());
        assert!(res.milp.unwrap().gap <= 1e-9);
    }

    #[test]
    fn fixed_binaries_reduce_to_lp() {
        let mut lp = uc_instance();
        lp.set_bounds(crate::lpmilp::VarId(2), 1.0, 1.0);
        lp.set_bounds(crate::lpmilp::VarId(3), 1.0, 1.0);
        let milp = solve_milp(&lp, 0.0).unwrap();
        let mut relaxed = lp.clone();
        for v in &mut relaxed.vars {
            v.kind = VarKind::Continuous;
        }
        let plain = crate::lpmilp::solve_lp(&relaxed).unwrap();
        assert!((milp.objective - plain.objective).abs() < 1e-9);
        assert_eq!(milp.milp.unwrap().nodes, 1);
    }

    #[test]
    fn infeasible_milp_is_reported() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let u = lp.binary("u", 1.0);
        let v = lp.binary("v", 1.0);
        lp.add_row("r", [(u, 1.0), (v, 1.0)], Sense::Eq, 1.5);
        assert_eq!(solve_milp(&lp, 0.0).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn node_limit_returns_incumbent_flag() {
        // knapsack-like problem that needs branching
        let mut lp = LinearProgram::new(Objective::Maximize);
        let w = [5.0, 4.0, 3.0, 7.0, 6.0, 2.0];
        let p = [10.0, 7.0, 4.5, 13.0, 11.0, 3.1];
        let xs: Vec<_> = (0..6).map(|i| lp.binary(format!("x{i}"), p[i])).collect();
        lp.add_row("cap", xs.iter().zip(w).map(|(&x, w)| (x, w)), Sense::Le, 13.5);
        let full = solve_milp(&lp, 0.0).unwrap();
        let oracle = enumerate_oracle(&lp, 20).unwrap();
        assert!((full.objective - oracle.objective).abs() < 1e-9);
        let opts = MilpOptions {
            gap: 0.0,
            node_limit: 1,
            ..MilpOptions::default()
        };
        let limited = solve_milp_with(&lp, &opts).unwrap();
        assert!(matches!(limited.status, Status::NodeLimit | Status::Optimal));
    }
}
