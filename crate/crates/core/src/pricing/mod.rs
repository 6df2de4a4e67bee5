//! Uniform and locational prices for a cleared outcome under IP, convex hull
//! and Join rules, and the resulting settlement per participant.

mod join;
mod settle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::model::{add_network, add_sellers, location_count, location_of, CommitMode, NetVars};
use crate::clearing::{ClearingError, Configuration, Granularity, MarketOutcome};
use crate::lpmilp::{solve_lp, LinearProgram, LpError, Objective, SolveResult, Status};
use crate::market::MarketInstance;

pub use join::join_prices;
pub use settle::{
    max_congestion_rent, network_lloc, settle, ParticipantRole, ParticipantSettlement, Settlement,
};

/// Relative loosening of line limits in the IP pricing LP, so a line loaded
/// exactly at its limit without needing more is priced as uncongested.
const IP_LIMIT_SLACK: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("{what} returned status {status:?}")]
    NotSolved { what: String, status: Status },
    #[error("price surface does not cover the instance: {0}")]
    Coverage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricingRule {
    Ip,
    Ch,
    Join,
    Euphemia,
}

impl PricingRule {
    pub const ALL: [PricingRule; 4] = [Self::Ip, Self::Ch, Self::Join, Self::Euphemia];
}

impl fmt::Display for PricingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ip => "ip",
            Self::Ch => "ch",
            Self::Join => "join",
            Self::Euphemia => "euphemia",
        })
    }
}

impl FromStr for PricingRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ip" => Ok(Self::Ip),
            "ch" => Ok(Self::Ch),
            "join" => Ok(Self::Join),
            "euphemia" => Ok(Self::Euphemia),
            other => Err(format!("unknown pricing rule `{other}` (expected ip, ch, join or euphemia)")),
        }
    }
}

/// One price per location and hour, EUR/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSurface {
    pub granularity: Granularity,
    pub rule: PricingRule,
    /// Location ids: "national", zone ids or node ids.
    pub locations: Vec<String>,
    /// Location index of every network node.
    pub node_location: Vec<usize>,
    /// `prices[location][hour]`.
    pub prices: Vec<Vec<f64>>,
}

impl PriceSurface {
    pub fn new(
        inst: &MarketInstance,
        config: &Configuration,
        rule: PricingRule,
        prices: Vec<Vec<f64>>,
    ) -> Self {
        let net = &inst.network;
        let locations = match config {
            Configuration::National => vec!["national".to_string()],
            Configuration::Zonal { zones, .. } => zones.zone_ids().to_vec(),
            Configuration::Nodal => net.nodes().iter().map(|n| n.id.clone()).collect(),
        };
        let node_location = (0..net.nodes().len()).map(|n| location_of(config, n)).collect();
        Self {
            granularity: config.granularity(),
            rule,
            locations,
            node_location,
            prices,
        }
    }

    pub fn hours(&self) -> usize {
        self.prices.first().map_or(0, Vec::len)
    }

    pub fn at_location(&self, loc: usize, t: usize) -> f64 {
        self.prices[loc][t]
    }

    /// Price seen by a participant located at node `node`.
    pub fn at_node(&self, node: usize, t: usize) -> f64 {
        self.prices[self.node_location[node]][t]
    }

    /// Per-node view of the surface (each node gets its location's price).
    pub fn per_node(&self) -> Vec<Vec<f64>> {
        self.node_location.iter().map(|&k| self.prices[k].clone()).collect()
    }

    pub fn with_rule(mut self, rule: PricingRule) -> Self {
        self.rule = rule;
        self
    }

    pub(crate) fn check_covers(&self, inst: &MarketInstance) -> Result<(), PricingError> {
        if self.node_location.len() != inst.network.nodes().len() {
            return Err(PricingError::Coverage(format!(
                "{} node locations for {} nodes",
                self.node_location.len(),
                inst.network.nodes().len()
            )));
        }
        if self.node_location.iter().any(|&k| k >= self.prices.len()) {
            return Err(PricingError::Coverage("node mapped to a missing location".into()));
        }
        if self.prices.iter().any(|row| row.len() != inst.hours) {
            return Err(PricingError::Coverage(format!(
                "price rows must have {} hours",
                inst.hours
            )));
        }
        if self.prices.iter().flatten().any(|p| !p.is_finite()) {
            return Err(PricingError::Coverage("non-finite price".into()));
        }
        Ok(())
    }
}

fn balance_duals(
    inst: &MarketInstance,
    config: &Configuration,
    net: &NetVars,
    res: &SolveResult,
) -> Vec<Vec<f64>> {
    (0..location_count(inst, config))
        .map(|k| (0..inst.hours).map(|t| res.dual(net.balance[k][t])).collect())
        .collect()
}

fn solve_pricing_lp(
    inst: &MarketInstance,
    config: &Configuration,
    mode: CommitMode<'_>,
    cuts: &[(usize, usize)],
    limit_slack: f64,
    what: &str,
) -> Result<Vec<Vec<f64>>, PricingError> {
    let mut lp = LinearProgram::new(Objective::Minimize);
    let sellers = add_sellers(&mut lp, inst, mode, cuts, false, true)?;
    let net = add_network(&mut lp, inst, config, &sellers, None, true)?;
    for vars in net.flow.iter().flatten() {
        for &v in vars {
            let (lo, hi) = (lp.vars[v.0].lower, lp.vars[v.0].upper);
            lp.set_bounds(v, lo - limit_slack * (1.0 + lo.abs()), hi + limit_slack * (1.0 + hi.abs()));
        }
    }
    let res = solve_lp(&lp)?;
    if res.status != Status::Optimal {
        return Err(PricingError::NotSolved {
            what: what.into(),
            status: res.status,
        });
    }
    Ok(balance_duals(inst, config, &net, &res))
}

/// Duals of the balance rows with commitments fixed at the outcome's values.
pub fn ip_prices(inst: &MarketInstance, outcome: &MarketOutcome) -> Result<PriceSurface, PricingError> {
    let config = &outcome.configuration;
    let prices = solve_pricing_lp(
        inst,
        config,
        CommitMode::Fixed(&outcome.schedule.commitment),
        &outcome.cuts,
        IP_LIMIT_SLACK,
        "fixed-commitment pricing LP",
    )?;
    Ok(PriceSurface::new(inst, config, PricingRule::Ip, prices))
}

/// Duals of the balance rows of the continuous relaxation of the clearing
/// problem. Cuts recorded in the outcome stay in force.
pub fn ch_prices(inst: &MarketInstance, outcome: &MarketOutcome) -> Result<PriceSurface, PricingError> {
    let config = &outcome.configuration;
    let prices = solve_pricing_lp(inst, config, CommitMode::Relaxed, &outcome.cuts, 0.0, "relaxed clearing LP")?;
    Ok(PriceSurface::new(inst, config, PricingRule::Ch, prices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_national, clear_nodal};
    use crate::fixtures;

    #[test]
    fn uc_example_prices() {
        let inst = fixtures::ex_uc();
        let out = clear_national(&inst, 0.0).unwrap();
        let ip = ip_prices(&inst, &out).unwrap();
        assert_eq!(ip.locations, vec!["national"]);
        assert!((ip.prices[0][0] - 20.0).abs() < 1e-9);
        let ch = ch_prices(&inst, &out).unwrap();
        assert!((ch.prices[0][0] - 22.0).abs() < 1e-9);
    }

    #[test]
    fn congested_two_node_prices() {
        let inst = fixtures::ex_2n();
        let out = clear_nodal(&inst, 0.0).unwrap();
        for surface in [ip_prices(&inst, &out).unwrap(), ch_prices(&inst, &out).unwrap()] {
            assert!((surface.at_node(0, 0) - 10.0).abs() < 1e-9);
            assert!((surface.at_node(1, 0) - 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn decongested_two_node_prices_equalise() {
        for limit in [80.0, 100.0] {
            let inst = fixtures::ex_2n_with_limit(limit);
            let out = clear_nodal(&inst, 0.0).unwrap();
            let ip = ip_prices(&inst, &out).unwrap();
            assert!((ip.at_node(0, 0) - ip.at_node(1, 0)).abs() < 1e-9);
            assert!((ip.at_node(0, 0) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in PricingRule::ALL {
            assert_eq!(rule.to_string().parse::<PricingRule>().unwrap(), rule);
        }
    }
}
