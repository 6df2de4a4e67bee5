//! Cost-based redispatch of a zonal or national outcome onto the full DC
//! network, and physical feasibility checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::model::{add_network, add_sellers, CommitMode};
use crate::clearing::{decode_outcome, ClearingError, Configuration, MarketOutcome};
use crate::grid::cross_zonal_lines;
use crate::lpmilp::{solve_milp, LinearProgram, Objective, Sense, Status, VarId, TAU_FEAS};
use crate::market::{cost_unchecked, MarketInstance};

/// Weight of the secondary objective (volume for min-cost, cost for min-volume).
const SECONDARY: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedispatchError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error("redispatch is infeasible when cross-zonal flows are capped at their zonal values; retry with the physical flow cap")]
    InfeasibleUnderZonalCap,
    #[error("redispatch returned status {0:?}")]
    NotSolved(Status),
    #[error("outcome does not match the instance: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowCap {
    /// Cross-zonal flows may not exceed their magnitude in the zonal outcome.
    #[default]
    ZonalFlows,
    /// Only the physical limits (after margin) apply.
    Physical,
}

impl fmt::Display for FlowCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZonalFlows => "zonal_flows",
            Self::Physical => "physical",
        })
    }
}

impl FromStr for FlowCap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zonal_flows" => Ok(Self::ZonalFlows),
            "physical" => Ok(Self::Physical),
            other => Err(format!("unknown redispatch flow cap `{other}` (expected zonal_flows or physical)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedispatchObjective {
    MinCost,
    MinVolume,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedispatchResult {
    /// DC-feasible outcome after redispatch.
    pub outcome: MarketOutcome,
    /// Σ_s |c_s(y) − c_s(y_before)|, EUR.
    pub cost: f64,
    /// Σ_s Σ_t |y − y_before|, MWh.
    pub volume: f64,
    /// Upward adjustments per seller and hour, MWh.
    pub up: Vec<Vec<f64>>,
    /// Downward adjustments per seller and hour, MWh.
    pub down: Vec<Vec<f64>>,
    pub flow_cap: FlowCap,
    pub objective: RedispatchObjective,
}

pub fn redispatch_min_cost(
    inst: &MarketInstance,
    before: &MarketOutcome,
    flow_cap: FlowCap,
    gap: f64,
) -> Result<RedispatchResult, RedispatchError> {
    redispatch(inst, before, flow_cap, gap, RedispatchObjective::MinCost)
}

pub fn redispatch_min_volume(
    inst: &MarketInstance,
    before: &MarketOutcome,
    flow_cap: FlowCap,
    gap: f64,
) -> Result<RedispatchResult, RedispatchError> {
    redispatch(inst, before, flow_cap, gap, RedispatchObjective::MinVolume)
}

fn redispatch(
    inst: &MarketInstance,
    before: &MarketOutcome,
    flow_cap: FlowCap,
    gap: f64,
    objective: RedispatchObjective,
) -> Result<RedispatchResult, RedispatchError> {
    check_shape(inst, before)?;
    let hours = inst.hours;
    let config = Configuration::Nodal;
    let mut lp = LinearProgram::new(Objective::Minimize);
    let sellers = add_sellers(&mut lp, inst, CommitMode::Binary, &[], false, false)
        .map_err(RedispatchError::Clearing)?;
    let net = add_network(&mut lp, inst, &config, &sellers, Some(&before.unserved), false)?;

    if flow_cap == FlowCap::ZonalFlows {
        if let Some(zones) = before.configuration.zones() {
            for l in cross_zonal_lines(&inst.network, zones).map_err(ClearingError::from)? {
                let vars = net.flow[l].as_ref().expect("nodal model has every line");
                for t in 0..hours {
                    let cap = inst.network.effective_limit(l).min(before.flows[l][t].abs());
                    let lo = lp.vars[vars[t].0].lower.max(-cap);
                    let hi = lp.vars[vars[t].0].upper.min(cap);
                    lp.set_bounds(vars[t], lo, hi);
                }
            }
        }
    }

    let (cost_w, vol_w) = match objective {
        RedispatchObjective::MinCost => (1.0, SECONDARY),
        RedispatchObjective::MinVolume => (SECONDARY, 1.0),
    };
    for (s, offer) in inst.sellers.iter().enumerate() {
        let id = &offer.seller_id;
        let base = before.seller_cost(inst, s);
        let dev = lp.continuous(format!("costdev[{id}]"), 0.0, f64::INFINITY, cost_w);
        let mut cost_terms: Vec<(VarId, f64)> = Vec::new();
        for t in 0..hours {
            cost_terms.push((sellers.y[s][t], offer.var_cost));
            cost_terms.push((sellers.u[s][t], offer.fixed_cost));
        }
        let mut up = cost_terms.clone();
        up.push((dev, -1.0));
        lp.add_row(format!("costdev+[{id}]"), up, Sense::Le, base);
        let mut down: Vec<(VarId, f64)> = cost_terms.iter().map(|&(v, a)| (v, -a)).collect();
        down.push((dev, -1.0));
        lp.add_row(format!("costdev-[{id}]"), down, Sense::Le, -base);

        for t in 0..hours {
            let y0 = before.schedule.dispatch[s][t];
            let v = lp.continuous(format!("voldev[{id},{t}]"), 0.0, f64::INFINITY, vol_w);
            lp.add_row(
                format!("voldev+[{id},{t}]"),
                [(sellers.y[s][t], 1.0), (v, -1.0)],
                Sense::Le,
                y0,
            );
            lp.add_row(
                format!("voldev-[{id},{t}]"),
                [(sellers.y[s][t], -1.0), (v, -1.0)],
                Sense::Le,
                -y0,
            );
        }
    }

    let res = solve_milp(&lp, gap).map_err(ClearingError::from)?;
    match res.status {
        Status::Optimal => {}
        Status::Infeasible if flow_cap == FlowCap::ZonalFlows && before.configuration.zones().is_some() => {
            return Err(RedispatchError::InfeasibleUnderZonalCap)
        }
        other => return Err(RedispatchError::NotSolved(other)),
    }
    let mut outcome = decode_outcome(inst, &config, &sellers, &net, &res)?;
    // lost load is carried over from the original outcome, not re-priced
    outcome.objective = outcome.generation_cost + inst.voll * outcome.total_unserved();

    let mut cost = 0.0;
    let mut volume = 0.0;
    let mut up = vec![vec![0.0; hours]; inst.sellers.len()];
    let mut down = vec![vec![0.0; hours]; inst.sellers.len()];
    for s in 0..inst.sellers.len() {
        let after = cost_unchecked(
            &inst.sellers[s],
            &outcome.schedule.dispatch[s],
            &outcome.schedule.commitment[s],
        );
        cost += (after - before.seller_cost(inst, s)).abs();
        for t in 0..hours {
            let d = outcome.schedule.dispatch[s][t] - before.schedule.dispatch[s][t];
            volume += d.abs();
            if d > 0.0 {
                up[s][t] = d;
            } else {
                down[s][t] = -d;
            }
        }
    }
    Ok(RedispatchResult {
        outcome,
        cost,
        volume,
        up,
        down,
        flow_cap,
        objective,
    })
}

fn check_shape(inst: &MarketInstance, out: &MarketOutcome) -> Result<(), RedispatchError> {
    let hours = inst.hours;
    let ok = out.schedule.dispatch.len() == inst.sellers.len()
        && out.schedule.dispatch.iter().all(|r| r.len() == hours)
        && out.unserved.len() == inst.buyers.len()
        && out.unserved.iter().all(|r| r.len() == hours)
        && out.flows.len() == inst.network.lines().len()
        && out.angles.len() == inst.network.nodes().len();
    if ok {
        Ok(())
    } else {
        Err(RedispatchError::Mismatch(
            "schedule, demand or network dimensions differ".into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineViolation {
    pub line: usize,
    pub hour: usize,
    pub flow: f64,
    pub limit: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceViolation {
    pub node: String,
    pub hour: usize,
    /// Generation − served load − net export, MW.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ViolationReport {
    pub lines: Vec<LineViolation>,
    pub balances: Vec<BalanceViolation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.lines.is_empty() && self.balances.is_empty()
    }
}

/// Lists every line-hour above its effective limit and every node-hour whose
/// DC balance does not close, using the flows implied by the outcome's angles.
pub fn feasibility_check(inst: &MarketInstance, out: &MarketOutcome) -> Result<ViolationReport, RedispatchError> {
    check_shape(inst, out)?;
    let net = &inst.network;
    let hours = inst.hours;
    let flows = crate::grid::dc_flows(net, &out.angles, hours).map_err(ClearingError::from)?;
    let mut report = ViolationReport::default();
    for (l, series) in flows.iter().enumerate() {
        let limit = net.effective_limit(l);
        for (t, &f) in series.iter().enumerate() {
            let excess = f.abs() - limit;
            if excess > TAU_FEAS * (1.0 + limit) {
                report.lines.push(LineViolation {
                    line: l,
                    hour: t,
                    flow: f,
                    limit,
                    excess,
                });
            }
        }
    }
    let n = net.nodes().len();
    let mut residual = vec![vec![0.0; hours]; n];
    for s in 0..inst.sellers.len() {
        let node = inst.seller_node(s);
        for t in 0..hours {
            residual[node][t] += out.schedule.dispatch[s][t];
        }
    }
    for b in 0..inst.buyers.len() {
        let node = inst.buyer_node(b);
        for t in 0..hours {
            residual[node][t] -= out.served[b][t];
        }
    }
    for (l, series) in flows.iter().enumerate() {
        let (a, b) = net.endpoints(l);
        for (t, &f) in series.iter().enumerate() {
            residual[a][t] -= f;
            residual[b][t] += f;
        }
    }
    for (node, row) in residual.iter().enumerate() {
        for (t, &r) in row.iter().enumerate() {
            if r.abs() > TAU_FEAS.max(1e-9 * inst.total_demand(t)) {
                report.balances.push(BalanceViolation {
                    node: net.nodes()[node].id.clone(),
                    hour: t,
                    residual: r,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_national, clear_nodal, clear_zonal};
    use crate::fixtures;

    #[test]
    fn two_zone_ex_b_redispatch() {
        let inst = fixtures::ex_b();
        let z = clear_zonal(&inst, &fixtures::ex_b_zones_2(&inst.network), 1.0, 0.0).unwrap();
        let r = redispatch_min_cost(&inst, &z, FlowCap::Physical, 0.0).unwrap();
        assert!((r.cost - 2200.0).abs() < 1e-6, "cost {}", r.cost);
        assert!((r.down[0][0] - 100.0).abs() < 1e-6);
        assert!((r.up[2][0] - 50.0).abs() < 1e-6);
        assert!((r.up[3][0] - 50.0).abs() < 1e-6);
        assert!(feasibility_check(&inst, &r.outcome).unwrap().is_feasible());

        let v = redispatch_min_volume(&inst, &z, FlowCap::Physical, 0.0).unwrap();
        assert!((v.volume - 200.0).abs() < 1e-6);
        assert!((v.cost - 2200.0).abs() < 1e-6);
    }

    #[test]
    fn three_zone_ex_b_redispatch() {
        let inst = fixtures::ex_b();
        let z = clear_zonal(&inst, &fixtures::ex_b_zones_3(&inst.network), 1.0, 0.0).unwrap();
        let r = redispatch_min_cost(&inst, &z, FlowCap::Physical, 0.0).unwrap();
        assert!((r.cost - 2300.0).abs() < 1e-6, "cost {}", r.cost);
        let v = redispatch_min_volume(&inst, &z, FlowCap::Physical, 0.0).unwrap();
        assert!((v.volume - 200.0).abs() < 1e-6);
        assert!((v.cost - 2300.0).abs() < 1e-6);
    }

    #[test]
    fn nodal_input_needs_no_redispatch() {
        let inst = fixtures::ex_b();
        let n = clear_nodal(&inst, 0.0).unwrap();
        for cap in [FlowCap::Physical, FlowCap::ZonalFlows] {
            let r = redispatch_min_cost(&inst, &n, cap, 0.0).unwrap();
            assert!(r.cost.abs() < 1e-6 && r.volume.abs() < 1e-6);
            let v = redispatch_min_volume(&inst, &n, cap, 0.0).unwrap();
            assert!(v.cost.abs() < 1e-6 && v.volume.abs() < 1e-6);
        }
    }

    #[test]
    fn national_outcome_violates_balance_at_isolated_nodes() {
        let inst = fixtures::ex_b();
        let nat = clear_national(&inst, 0.0).unwrap();
        let report = feasibility_check(&inst, &nat).unwrap();
        let nodes: Vec<&str> = report.balances.iter().map(|b| b.node.as_str()).collect();
        assert_eq!(nodes, vec!["v1", "v5"]);
        assert!((report.balances[0].residual - 100.0).abs() < 1e-9);
        assert!((report.balances[1].residual + 100.0).abs() < 1e-9);
        assert!(feasibility_check(&inst, &clear_nodal(&inst, 0.0).unwrap())
            .unwrap()
            .is_feasible());
    }

    #[test]
    fn overloaded_line_is_reported_once() {
        let inst = fixtures::ex_2n();
        let mut out = clear_nodal(&inst, 0.0).unwrap();
        // push 60 MW over the 50 MW line (susceptance 10)
        out.angles = vec![vec![6.0], vec![0.0]];
        out.schedule.dispatch = vec![vec![60.0], vec![20.0]];
        let report = feasibility_check(&inst, &out).unwrap();
        assert_eq!(report.lines.len(), 1);
        assert!((report.lines[0].excess - 10.0).abs() < 1e-9);
        assert!(report.balances.is_empty());
    }

    #[test]
    fn flow_cap_parses() {
        assert_eq!("physical".parse::<FlowCap>().unwrap(), FlowCap::Physical);
        assert_eq!("zonal_flows".parse::<FlowCap>().unwrap(), FlowCap::ZonalFlows);
        assert!("other".parse::<FlowCap>().is_err());
    }
}
