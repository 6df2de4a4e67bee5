//! Shared LP construction for clearing, redispatch and pricing problems.

use crate::grid::{cross_zonal_lines, ZoneMap};
use crate::lpmilp::{LinearProgram, RowId, Sense, VarId, VarKind};
use crate::market::{build_uc_constraints, MarketInstance, UcVar};

use super::{Configuration, ClearingError};

/// Secondary objective weight per seller index, breaking ties among
/// equal-cost dispatches deterministically.
pub(crate) const TIE_BREAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) enum CommitMode<'a> {
    Binary,
    Relaxed,
    Fixed(&'a [Vec<bool>]),
}

pub(crate) struct SellerVars {
    pub y: Vec<Vec<VarId>>,
    pub u: Vec<Vec<VarId>>,
    #[allow(dead_code)]
    pub phi: Vec<Vec<VarId>>,
}

/// Adds dispatch, commitment and startup variables plus polytope rows for
/// every seller. `cuts` lists (seller, hour) pairs forced offline.
pub(crate) fn add_sellers(
    lp: &mut LinearProgram,
    inst: &MarketInstance,
    mode: CommitMode<'_>,
    cuts: &[(usize, usize)],
    tie_break: bool,
    with_costs: bool,
) -> Result<SellerVars, ClearingError> {
    let hours = inst.hours;
    let mut vars = SellerVars {
        y: Vec::new(),
        u: Vec::new(),
        phi: Vec::new(),
    };
    for (s, offer) in inst.sellers.iter().enumerate() {
        let id = &offer.seller_id;
        let ycost = if with_costs {
            offer.var_cost + if tie_break { TIE_BREAK * (s + 1) as f64 } else { 0.0 }
        } else {
            0.0
        };
        let ucost = if with_costs { offer.fixed_cost } else { 0.0 };
        let y: Vec<VarId> = (0..hours)
            .map(|t| lp.continuous(format!("y[{id},{t}]"), 0.0, f64::INFINITY, ycost))
            .collect();
        let u: Vec<VarId> = (0..hours)
            .map(|t| {
                let name = format!("u[{id},{t}]");
                let cut = cuts.contains(&(s, t));
                match mode {
                    CommitMode::Binary => {
                        let v = lp.add_var(name, 0.0, 1.0, ucost, VarKind::Binary);
                        if cut {
                            lp.set_bounds(v, 0.0, 0.0);
                        }
                        v
                    }
                    CommitMode::Relaxed => {
                        let hi = if cut { 0.0 } else { 1.0 };
                        lp.continuous(name, 0.0, hi, ucost)
                    }
                    CommitMode::Fixed(fixed) => {
                        let v = if fixed[s][t] && !cut { 1.0 } else { 0.0 };
                        lp.continuous(name, v, v, ucost)
                    }
                }
            })
            .collect();
        let phi: Vec<VarId> = (0..hours)
            .map(|t| lp.continuous(format!("phi[{id},{t}]"), 0.0, 1.0, 0.0))
            .collect();
        for row in build_uc_constraints(offer, hours)? {
            let name = format!("{}[{id}]", row.label());
            let terms = row.terms.iter().map(|&(v, a)| {
                let var = match v {
                    UcVar::Dispatch(t) => y[t],
                    UcVar::Commit(t) => u[t],
                    UcVar::Startup(t) => phi[t],
                };
                (var, a)
            });
            lp.add_row(name, terms, row.sense, row.rhs);
        }
        vars.y.push(y);
        vars.u.push(u);
        vars.phi.push(phi);
    }
    Ok(vars)
}

pub(crate) struct NetVars {
    /// Balance row per location and hour.
    pub balance: Vec<Vec<RowId>>,
    /// Angle per node and hour (empty for national).
    pub theta: Vec<Vec<VarId>>,
    /// Flow variables per line and hour for modelled lines.
    pub flow: Vec<Option<Vec<VarId>>>,
    pub unserved: Vec<Vec<VarId>>,
}

/// Index of the pricing location that node `n` belongs to.
pub(crate) fn location_of(config: &Configuration, n: usize) -> usize {
    match config {
        Configuration::National => 0,
        Configuration::Zonal { zones, .. } => zones.zone_of(n),
        Configuration::Nodal => n,
    }
}

pub(crate) fn location_count(inst: &MarketInstance, config: &Configuration) -> usize {
    match config {
        Configuration::National => 1,
        Configuration::Zonal { zones, .. } => zones.zone_count(),
        Configuration::Nodal => inst.network.nodes().len(),
    }
}

/// Lines carrying flow variables under `config`, with their flow limits.
pub(crate) fn modelled_lines(
    inst: &MarketInstance,
    config: &Configuration,
) -> Result<Vec<(usize, f64)>, ClearingError> {
    let net = &inst.network;
    Ok(match config {
        Configuration::National => Vec::new(),
        Configuration::Zonal {
            zones,
            interconnector_fraction,
        } => cross_zonal_lines(net, zones)?
            .into_iter()
            .map(|l| (l, interconnector_fraction * net.effective_limit(l)))
            .collect(),
        Configuration::Nodal => (0..net.lines().len()).map(|l| (l, net.effective_limit(l))).collect(),
    })
}

/// Adds balance rows, flows and angles for `config`.
///
/// Zonal balance is written per zone: zone net generation equals net export
/// over cross-zonal lines, whose flows follow the DC equations on the
/// endpoint angles. This is the projection of a model with free per-node
/// redistribution inside each zone.
pub(crate) fn add_network(
    lp: &mut LinearProgram,
    inst: &MarketInstance,
    config: &Configuration,
    sellers: &SellerVars,
    unserved_fixed: Option<&[Vec<f64>]>,
    voll_cost: bool,
) -> Result<NetVars, ClearingError> {
    if let Configuration::Zonal {
        zones,
        interconnector_fraction,
    } = config
    {
        validate_zonal(inst, zones, *interconnector_fraction)?;
    }
    let hours = inst.hours;
    let net = &inst.network;
    let nloc = location_count(inst, config);

    let unserved: Vec<Vec<VarId>> = inst
        .buyers
        .iter()
        .enumerate()
        .map(|(b, buyer)| {
            (0..hours)
                .map(|t| {
                    let (lo, hi) = match unserved_fixed {
                        Some(fixed) => (fixed[b][t], fixed[b][t]),
                        None => (0.0, buyer.profile[t]),
                    };
                    let cost = if voll_cost { inst.voll } else { 0.0 };
                    lp.continuous(format!("unserved[{},{t}]", buyer.buyer_id), lo, hi, cost)
                })
                .collect()
        })
        .collect();

    let lines = modelled_lines(inst, config)?;
    let theta: Vec<Vec<VarId>> = if matches!(config, Configuration::National) {
        Vec::new()
    } else {
        let (lo, hi) = match net.angle_bound() {
            Some(b) => (-b, b),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        net.nodes()
            .iter()
            .map(|n| {
                (0..hours)
                    .map(|t| lp.continuous(format!("theta[{},{t}]", n.id), lo, hi, 0.0))
                    .collect()
            })
            .collect()
    };
    let mut flow: Vec<Option<Vec<VarId>>> = vec![None; net.lines().len()];
    for &(l, cap) in &lines {
        let line = &net.lines()[l];
        let (a, b) = net.endpoints(l);
        let vars: Vec<VarId> = (0..hours)
            .map(|t| {
                let f = lp.continuous(format!("flow[{}-{},{t}]", line.from, line.to), -cap, cap, 0.0);
                lp.add_row(
                    format!("dc[{}-{},{t}]", line.from, line.to),
                    [
                        (f, 1.0),
                        (theta[a][t], -line.susceptance),
                        (theta[b][t], line.susceptance),
                    ],
                    Sense::Eq,
                    0.0,
                );
                f
            })
            .collect();
        flow[l] = Some(vars);
    }

    // balance: Σ y + Σ unserved − net export = Σ load
    let loc_name = |k: usize| -> String {
        match config {
            Configuration::National => "national".to_string(),
            Configuration::Zonal { zones, .. } => zones.zone_ids()[k].clone(),
            Configuration::Nodal => net.nodes()[k].id.clone(),
        }
    };
    let mut balance = Vec::with_capacity(nloc);
    for k in 0..nloc {
        let mut rows = Vec::with_capacity(hours);
        for t in 0..hours {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let mut load = 0.0;
            for s in 0..inst.sellers.len() {
                if location_of(config, inst.seller_node(s)) == k {
                    terms.push((sellers.y[s][t], 1.0));
                }
            }
            for (b, buyer) in inst.buyers.iter().enumerate() {
                if location_of(config, inst.buyer_node(b)) == k {
                    terms.push((unserved[b][t], 1.0));
                    load += buyer.profile[t];
                }
            }
            for &(l, _) in &lines {
                let (a, bn) = net.endpoints(l);
                let f = flow[l].as_ref().unwrap()[t];
                if location_of(config, a) == k {
                    terms.push((f, -1.0));
                }
                if location_of(config, bn) == k {
                    terms.push((f, 1.0));
                }
            }
            rows.push(lp.add_row(format!("balance[{},{t}]", loc_name(k)), terms, Sense::Eq, load));
        }
        balance.push(rows);
    }
    Ok(NetVars {
        balance,
        theta,
        flow,
        unserved,
    })
}

pub(crate) fn validate_zonal(inst: &MarketInstance, zones: &ZoneMap, fraction: f64) -> Result<(), ClearingError> {
    if !zones.is_valid_for(&inst.network) {
        return Err(ClearingError::InvalidZones("zone map does not match the network".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ClearingError::InvalidZones(format!(
            "interconnector fraction {fraction} outside (0, 1]"
        )));
    }
    Ok(())
}
