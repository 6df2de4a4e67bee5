//! Welfare-maximising market clearing under national, zonal and nodal
//! network representations.
//!
//! With inelastic demand, welfare maximisation is cost minimisation. Unserved
//! energy is priced at the value of lost load so every clearing is feasible.

pub(crate) mod model;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{dc_flows, GridError, ZoneMap};
use crate::lpmilp::{solve_milp, LinearProgram, LpError, Objective, SolveResult, Status};
use crate::market::{cost_unchecked, MarketError, MarketInstance, Schedule};

use model::{add_network, add_sellers, CommitMode, NetVars, SellerVars};

pub const DEFAULT_INTERCONNECTOR_FRACTION: f64 = 0.8;
pub const DEFAULT_MIP_GAP: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid zones: {0}")]
    InvalidZones(String),
    #[error("{what} returned status {status:?}")]
    NotSolved { what: String, status: Status },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Configuration {
    National,
    Zonal {
        zones: ZoneMap,
        interconnector_fraction: f64,
    },
    Nodal,
}

impl Configuration {
    pub fn zonal(zones: ZoneMap) -> Self {
        Self::Zonal {
            zones,
            interconnector_fraction: DEFAULT_INTERCONNECTOR_FRACTION,
        }
    }

    pub fn tag(&self) -> String {
        self.to_string()
    }

    pub fn granularity(&self) -> Granularity {
        match self {
            Self::National => Granularity::National,
            Self::Zonal { .. } => Granularity::Zonal,
            Self::Nodal => Granularity::Nodal,
        }
    }

    pub fn zones(&self) -> Option<&ZoneMap> {
        match self {
            Self::Zonal { zones, .. } => Some(zones),
            _ => None,
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::National => write!(f, "national"),
            Self::Zonal { zones, .. } => write!(f, "zonal({})", zones.zone_count()),
            Self::Nodal => write!(f, "nodal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    National,
    Zonal,
    Nodal,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::National => "national",
            Self::Zonal => "zonal",
            Self::Nodal => "nodal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub configuration: Configuration,
    pub schedule: Schedule,
    /// Voltage angles per node and hour (zero for national clearing).
    pub angles: Vec<Vec<f64>>,
    /// Flow per line and hour implied by the angles.
    pub flows: Vec<Vec<f64>>,
    pub served: Vec<Vec<f64>>,
    pub unserved: Vec<Vec<f64>>,
    /// Generation cost, EUR (excludes lost load).
    pub generation_cost: f64,
    /// Generation cost plus lost load at VOLL, EUR.
    pub objective: f64,
    pub mip_gap: f64,
    /// (seller, hour) pairs forced offline when this outcome was computed.
    pub cuts: Vec<(usize, usize)>,
}

impl MarketOutcome {
    pub fn total_unserved(&self) -> f64 {
        self.unserved.iter().flatten().sum()
    }

    pub fn seller_cost(&self, inst: &MarketInstance, s: usize) -> f64 {
        cost_unchecked(
            &inst.sellers[s],
            &self.schedule.dispatch[s],
            &self.schedule.commitment[s],
        )
    }
}

pub fn clear_national(inst: &MarketInstance, gap: f64) -> Result<MarketOutcome, ClearingError> {
    clear(inst, &Configuration::National, gap, &[])
}

pub fn clear_zonal(
    inst: &MarketInstance,
    zones: &ZoneMap,
    interconnector_fraction: f64,
    gap: f64,
) -> Result<MarketOutcome, ClearingError> {
    let config = Configuration::Zonal {
        zones: zones.clone(),
        interconnector_fraction,
    };
    clear(inst, &config, gap, &[])
}

pub fn clear_nodal(inst: &MarketInstance, gap: f64) -> Result<MarketOutcome, ClearingError> {
    clear(inst, &Configuration::Nodal, gap, &[])
}

pub(crate) struct ClearingModel {
    pub lp: LinearProgram,
    pub sellers: SellerVars,
    pub net: NetVars,
}

pub(crate) fn build_clearing(
    inst: &MarketInstance,
    config: &Configuration,
    mode: CommitMode<'_>,
    cuts: &[(usize, usize)],
    tie_break: bool,
) -> Result<ClearingModel, ClearingError> {
    let mut lp = LinearProgram::new(Objective::Minimize);
    let sellers = add_sellers(&mut lp, inst, mode, cuts, tie_break, true)?;
    let net = add_network(&mut lp, inst, config, &sellers, None, true)?;
    Ok(ClearingModel { lp, sellers, net })
}

/// The clearing MILP that [`clear`] solves, for inspection or other solvers.
pub fn clearing_program(
    inst: &MarketInstance,
    config: &Configuration,
    cuts: &[(usize, usize)],
) -> Result<LinearProgram, ClearingError> {
    Ok(build_clearing(inst, config, CommitMode::Binary, cuts, true)?.lp)
}

/// Clears `inst` under `config` with the given (seller, hour) commitments
/// forced to zero.
pub fn clear(
    inst: &MarketInstance,
    config: &Configuration,
    gap: f64,
    cuts: &[(usize, usize)],
) -> Result<MarketOutcome, ClearingError> {
    let model = build_clearing(inst, config, CommitMode::Binary, cuts, true)?;
    let res = solve_milp(&model.lp, gap)?;
    if res.status != Status::Optimal {
        return Err(ClearingError::NotSolved {
            what: format!("{config} clearing"),
            status: res.status,
        });
    }
    let mut out = decode_outcome(inst, config, &model.sellers, &model.net, &res)?;
    out.cuts = cuts.to_vec();
    Ok(out)
}

pub(crate) fn decode_outcome(
    inst: &MarketInstance,
    config: &Configuration,
    sellers: &SellerVars,
    net: &NetVars,
    res: &SolveResult,
) -> Result<MarketOutcome, ClearingError> {
    let hours = inst.hours;
    let mut dispatch = Vec::with_capacity(inst.sellers.len());
    let mut commitment = Vec::with_capacity(inst.sellers.len());
    for s in 0..inst.sellers.len() {
        let u: Vec<bool> = sellers.u[s].iter().map(|&v| res.value(v) > 0.5).collect();
        let y: Vec<f64> = sellers.y[s]
            .iter()
            .zip(&u)
            .map(|(&v, &on)| if on { res.value(v).max(0.0) } else { 0.0 })
            .collect();
        dispatch.push(y);
        commitment.push(u);
    }
    let schedule = Schedule::from_commitment(dispatch, commitment);
    let unserved: Vec<Vec<f64>> = net
        .unserved
        .iter()
        .map(|row| row.iter().map(|&v| res.value(v).max(0.0)).collect())
        .collect();
    let served: Vec<Vec<f64>> = inst
        .buyers
        .iter()
        .zip(&unserved)
        .map(|(b, un)| b.profile.iter().zip(un).map(|(p, u)| p - u).collect())
        .collect();
    let nodes = inst.network.nodes().len();
    let angles: Vec<Vec<f64>> = if net.theta.is_empty() {
        vec![vec![0.0; hours]; nodes]
    } else {
        net.theta
            .iter()
            .map(|row| row.iter().map(|&v| res.value(v)).collect())
            .collect()
    };
    let flows = dc_flows(&inst.network, &angles, hours)?;
    let generation_cost: f64 = (0..inst.sellers.len())
        .map(|s| cost_unchecked(&inst.sellers[s], &schedule.dispatch[s], &schedule.commitment[s]))
        .sum();
    let lost: f64 = unserved.iter().flatten().sum();
    Ok(MarketOutcome {
        configuration: config.clone(),
        schedule,
        angles,
        flows,
        served,
        unserved,
        generation_cost,
        objective: generation_cost + inst.voll * lost,
        mip_gap: res.milp.map_or(0.0, |m| m.gap),
        cuts: Vec::new(),
    })
}
