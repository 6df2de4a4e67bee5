//! Linear and mixed-integer programming.
//!
//! A small dense revised simplex with bounded variables backs every LP in the
//! crate. Mixed-integer problems are solved by best-bound branch and bound on
//! top of it, and [`enumerate_oracle`] provides an exhaustive reference solver
//! for problems with few binaries.

mod branch;
mod dump;
mod oracle;
mod simplex;

pub use branch::{solve_milp, solve_milp_with, MilpOptions};
pub use dump::{maybe_dump, to_lp_text, DUMP_DIR_ENV};
pub use oracle::{enumerate_oracle, DEFAULT_MAX_BINARIES};
pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};

use thiserror::Error;

/// Absolute primal feasibility tolerance per constraint.
pub const TAU_FEAS: f64 = 1e-7;
/// Relative tolerance for dual feasibility and strong duality.
pub const TAU_DUAL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("solve_lp called on a program with {0} binary variable(s)")]
    IntegralityInLp(usize),
    #[error("simplex iteration limit of {iterations} reached (cycling guard)")]
    CyclingGuard { iterations: usize },
    #[error("numerically singular basis at row {row} ({name})")]
    SingularBasis { row: usize, name: String },
    #[error("enumeration refused: {count} binaries exceed the limit of {max}")]
    TooManyBinaries { count: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear program with optional binary variables.
///
/// Problems are built incrementally and are immutable from the solvers' point
/// of view; solvers never modify the program they are given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Objective,
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
        kind: VarKind,
    ) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
            kind,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.add_var(name, lower, upper, cost, VarKind::Continuous)
    }

    pub fn binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        self.add_var(name, 0.0, 1.0, cost, VarKind::Binary)
    }

    /// Adds a row; repeated variables in `terms` are summed.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, a) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some((_, b)) => *b += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Constraint {
            name: name.into(),
            terms: merged,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        self.vars[v.0].lower = lower;
        self.vars[v.0].upper = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    /// Objective value of `x` in the program's own sense.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Largest absolute violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(i, x);
            let viol = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::Malformed(format!("variable {i} ({}) has NaN data", v.name)));
            }
            if v.lower > v.upper {
                return Err(LpError::Malformed(format!(
                    "variable {i} ({}) has lower {} > upper {}",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {i} ({}) has an empty domain", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(LpError::Malformed(format!(
                    "binary variable {i} ({}) has bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} ({}) has non-finite rhs", row.name)));
            }
            for &(v, a) in &row.terms {
                if v.0 >= self.vars.len() {
                    return Err(LpError::Malformed(format!(
                        "row {i} ({}) references undeclared variable {}",
                        row.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} ({}) has a non-finite coefficient", row.name)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Branch and bound stopped at its node limit; `x` holds the incumbent if any.
    NodeLimit,
}

/// Branch-and-bound bookkeeping attached to MILP results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpInfo {
    pub incumbent: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimal objective to each row's right-hand side,
    /// in the program's own objective sense. Pure LP solves only.
    pub duals: Option<Vec<f64>>,
    /// Reduced cost per variable, in the program's own objective sense.
    pub reduced_costs: Option<Vec<f64>>,
    pub milp: Option<MilpInfo>,
    pub iterations: usize,
}

impl SolveResult {
    pub(crate) fn without_solution(status: Status) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            duals: None,
            reduced_costs: None,
            milp: None,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals.as_ref().expect("duals are only available for LP solves")[r.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_row_merges_repeated_terms() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let x = lp.continuous("x", 0.0, 1.0, 1.0);
        let y = lp.continuous("y", 0.0, 1.0, 1.0);
        lp.add_row("r", [(x, 1.0), (y, 2.0), (x, 3.0), (y, -2.0)], Sense::Le, 1.0);
        assert_eq!(lp.rows[0].terms, vec![(x, 4.0)]);
    }

    #[test]
    fn validate_rejects_bad_programs() {
        let mut lp = LinearProgram::new(Objective::Minimize);
        let x = lp.continuous("x", 2.0, 1.0, 0.0);
        assert!(matches!(lp.validate(), Err(LpError::Malformed(_))));
        lp.set_bounds(x, 0.0, 1.0);
        lp.add_row("r", [(VarId(7), 1.0)], Sense::Le, 1.0);
        assert!(matches!(lp.validate(), Err(LpError::Malformed(m)) if m.contains("undeclared")));

        let mut lp = LinearProgram::new(Objective::Minimize);
        lp.add_var("b", 0.0, 2.0, 0.0, VarKind::Binary);
        assert!(lp.validate().is_err());
    }
}
