//! Assignment of grid units to seller categories so that aggregate capacity
//! and unit counts per category match their targets as closely as possible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpmilp::{solve_milp, LinearProgram, LpError, Objective, Sense, Status, VarId};

pub const DEFAULT_CAPACITY_BOUND: f64 = 600.0;
pub const DEFAULT_COUNT_BOUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridUnit {
    pub id: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    /// Target capacity P_a, MW.
    pub capacity: f64,
    /// Target unit count n_a.
    pub count: usize,
}

/// A broad plant type with its grid units and seller categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantType {
    pub name: String,
    pub units: Vec<GridUnit>,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMappingProblem {
    pub types: Vec<PlantType>,
    /// Units of unknown type, assignable to any category.
    #[serde(default)]
    pub unidentified: Vec<GridUnit>,
    #[serde(default = "default_capacity_bound")]
    pub capacity_bound: f64,
    #[serde(default = "default_count_bound")]
    pub count_bound: f64,
}

fn default_capacity_bound() -> f64 {
    DEFAULT_CAPACITY_BOUND
}

fn default_count_bound() -> f64 {
    DEFAULT_COUNT_BOUND
}

impl UnitMappingProblem {
    pub fn new(types: Vec<PlantType>) -> Self {
        Self {
            types,
            unidentified: Vec::new(),
            capacity_bound: DEFAULT_CAPACITY_BOUND,
            count_bound: DEFAULT_COUNT_BOUND,
        }
    }

    fn validate(&self) -> Result<(), MappingError> {
        let all_units = self
            .types
            .iter()
            .flat_map(|k| &k.units)
            .chain(&self.unidentified);
        for u in all_units {
            if !(u.capacity.is_finite() && u.capacity >= 0.0) {
                return Err(MappingError::Invalid(format!("unit `{}` has invalid capacity", u.id)));
            }
        }
        for k in &self.types {
            if k.categories.is_empty() && !k.units.is_empty() {
                return Err(MappingError::Invalid(format!("type `{}` has units but no categories", k.name)));
            }
            for a in &k.categories {
                if !(a.capacity.is_finite() && a.capacity >= 0.0) {
                    return Err(MappingError::Invalid(format!("category `{}` has invalid capacity", a.name)));
                }
            }
        }
        if !(self.capacity_bound >= 0.0 && self.count_bound >= 0.0) {
            return Err(MappingError::Invalid("deviation bounds must be non-negative".into()));
        }
        Ok(())
    }

    /// (type index, category index) for every category, in order.
    fn categories(&self) -> Vec<(usize, usize)> {
        self.types
            .iter()
            .enumerate()
            .flat_map(|(k, t)| (0..t.categories.len()).map(move |a| (k, a)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDeviation {
    pub plant_type: String,
    pub category: String,
    /// P_a − assigned capacity, MW.
    pub capacity: f64,
    /// n_a − assigned units.
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitAssignment {
    /// (unit id, plant type, category) per unit, typed units first.
    pub assignments: Vec<(String, String, String)>,
    pub deviations: Vec<CategoryDeviation>,
    /// Σ_a n_a · capacity deviation + P_a · count deviation.
    pub objective: f64,
    pub mip_gap: f64,
}

/// Why no assignment satisfies the deviation bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingInfeasibility {
    /// Categories whose bounds cannot be met, as `type/category`.
    pub binding: Vec<String>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("invalid mapping problem: {0}")]
    Invalid(String),
    #[error("no assignment within the deviation bounds; binding categories: {}", .0.binding.join(", "))]
    Infeasible(MappingInfeasibility),
    #[error("mapping MILP returned status {0:?}")]
    NotSolved(Status),
}

/// Solves the assignment MILP: each unit goes to exactly one category of its
/// type (unidentified units to any category), capacity shortfall in
/// [0, capacity_bound] and count shortfall in [0, count_bound] per category,
/// minimising Σ_a n_a · capacity shortfall + P_a · count shortfall.
pub fn map_units(problem: &UnitMappingProblem, gap: f64) -> Result<UnitAssignment, MappingError> {
    problem.validate()?;
    let cats = problem.categories();
    let (lp, x, units) = build(problem, &cats);
    let res = solve_milp(&lp, gap)?;
    match res.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(MappingError::Infeasible(explain(problem))),
        other => return Err(MappingError::NotSolved(other)),
    }

    let mut assigned_cap = vec![0.0; cats.len()];
    let mut assigned_n = vec![0.0; cats.len()];
    let mut assignments = Vec::new();
    for (unit, options) in units.iter().zip(&x) {
        let Some(&(c, _)) = options.iter().find(|&&(_, v)| res.value(v) > 0.5) else {
            continue;
        };
        assigned_cap[c] += unit.capacity;
        assigned_n[c] += 1.0;
        let (k, a) = cats[c];
        assignments.push((
            unit.id.clone(),
            problem.types[k].name.clone(),
            problem.types[k].categories[a].name.clone(),
        ));
    }
    let mut objective = 0.0;
    let deviations = cats
        .iter()
        .enumerate()
        .map(|(c, &(k, a))| {
            let cat = &problem.types[k].categories[a];
            let capacity = cat.capacity - assigned_cap[c];
            let count = cat.count as f64 - assigned_n[c];
            objective += cat.count as f64 * capacity + cat.capacity * count;
            CategoryDeviation {
                plant_type: problem.types[k].name.clone(),
                category: cat.name.clone(),
                capacity,
                count,
            }
        })
        .collect();
    Ok(UnitAssignment {
        assignments,
        deviations,
        objective,
        mip_gap: res.milp.map_or(0.0, |m| m.gap),
    })
}

type Build<'a> = (LinearProgram, Vec<Vec<(usize, VarId)>>, Vec<&'a GridUnit>);

fn build<'a>(problem: &'a UnitMappingProblem, cats: &[(usize, usize)]) -> Build<'a> {
    let mut lp = LinearProgram::new(Objective::Minimize);
    let mut units: Vec<&GridUnit> = Vec::new();
    let mut x: Vec<Vec<(usize, VarId)>> = Vec::new();
    let mut add_unit = |lp: &mut LinearProgram, unit: &'a GridUnit, allowed: Vec<usize>| {
        let vars: Vec<(usize, VarId)> = allowed
            .into_iter()
            .map(|c| {
                let (k, a) = cats[c];
                let cat = &problem.types[k].categories[a];
                // objective in x: −(n_a p_i + P_a) per assignment, constants dropped
                let cost = -(cat.count as f64 * unit.capacity + cat.capacity);
                (c, lp.binary(format!("x[{},{}]", unit.id, cat.name), cost))
            })
            .collect();
        lp.add_row(
            format!("assign[{}]", unit.id),
            vars.iter().map(|&(_, v)| (v, 1.0)),
            Sense::Eq,
            1.0,
        );
        units.push(unit);
        x.push(vars);
    };
    for (k, t) in problem.types.iter().enumerate() {
        let allowed: Vec<usize> = (0..cats.len()).filter(|&c| cats[c].0 == k).collect();
        for unit in &t.units {
            add_unit(&mut lp, unit, allowed.clone());
        }
    }
    for unit in &problem.unidentified {
        add_unit(&mut lp, unit, (0..cats.len()).collect());
    }

    for (c, &(k, a)) in cats.iter().enumerate() {
        let cat = &problem.types[k].categories[a];
        let mut cap_terms = Vec::new();
        let mut n_terms = Vec::new();
        for (unit, options) in units.iter().zip(&x) {
            for &(cc, v) in options {
                if cc == c {
                    cap_terms.push((v, unit.capacity));
                    n_terms.push((v, 1.0));
                }
            }
        }
        let n = cat.count as f64;
        lp.add_row(format!("cap-max[{}]", cat.name), cap_terms.clone(), Sense::Le, cat.capacity);
        lp.add_row(
            format!("cap-min[{}]", cat.name),
            cap_terms,
            Sense::Ge,
            cat.capacity - problem.capacity_bound,
        );
        lp.add_row(format!("count-max[{}]", cat.name), n_terms.clone(), Sense::Le, n);
        lp.add_row(format!("count-min[{}]", cat.name), n_terms, Sense::Ge, n - problem.count_bound);
    }
    (lp, x, units)
}

/// Aggregate checks per type and per category that locate the conflict.
fn explain(problem: &UnitMappingProblem) -> MappingInfeasibility {
    let mut binding = Vec::new();
    let mut reasons = Vec::new();
    let free_cap: f64 = problem.unidentified.iter().map(|u| u.capacity).sum();
    let free_n = problem.unidentified.len() as f64;
    for t in &problem.types {
        let cap: f64 = t.units.iter().map(|u| u.capacity).sum();
        let n = t.units.len() as f64;
        let max_cap: f64 = t.categories.iter().map(|a| a.capacity).sum();
        let min_cap: f64 = t
            .categories
            .iter()
            .map(|a| (a.capacity - problem.capacity_bound).max(0.0))
            .sum();
        let max_n: f64 = t.categories.iter().map(|a| a.count as f64).sum();
        let min_n: f64 = t
            .categories
            .iter()
            .map(|a| (a.count as f64 - problem.count_bound).max(0.0))
            .sum();
        let mut type_reasons = Vec::new();
        if cap > max_cap + 1e-9 {
            type_reasons.push(format!("{}: units total {cap} MW above category targets {max_cap} MW", t.name));
        }
        if cap + free_cap < min_cap - 1e-9 {
            type_reasons.push(format!(
                "{}: at most {} MW available, categories need at least {min_cap} MW",
                t.name,
                cap + free_cap
            ));
        }
        if n > max_n {
            type_reasons.push(format!("{}: {n} units above category targets of {max_n}", t.name));
        }
        if n + free_n < min_n {
            type_reasons.push(format!(
                "{}: at most {} units available, categories need at least {min_n}",
                t.name,
                n + free_n
            ));
        }
        for a in &t.categories {
            let mut r = Vec::new();
            let smallest = t
                .units
                .iter()
                .chain(&problem.unidentified)
                .map(|u| u.capacity)
                .fold(f64::INFINITY, f64::min);
            if a.capacity > problem.capacity_bound {
                if a.count == 0 {
                    r.push(format!(
                        "{}/{}: no units allowed but {} MW must be covered",
                        t.name, a.name, a.capacity
                    ));
                } else if smallest > a.capacity {
                    r.push(format!("{}/{}: every eligible unit is larger than the target", t.name, a.name));
                }
            }
            if !r.is_empty() || !type_reasons.is_empty() {
                binding.push(format!("{}/{}", t.name, a.name));
            }
            reasons.extend(r);
        }
        reasons.extend(type_reasons);
    }
    if binding.is_empty() {
        binding = problem
            .types
            .iter()
            .flat_map(|t| t.categories.iter().map(move |a| format!("{}/{}", t.name, a.name)))
            .collect();
        reasons.push("no single type or category is infeasible on its own; the bounds conflict jointly".into());
    }
    MappingInfeasibility { binding, reasons }
}
