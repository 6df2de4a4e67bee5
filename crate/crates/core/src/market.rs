//! Bids, generator data, the unit-commitment polytope and cost evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{validate_network, GridError, Network, ZoneMap};
use crate::lpmilp::Sense;

pub const DEFAULT_VOLL: f64 = 3000.0;

/// Tolerance used when checking schedules against the polytope.
const POLY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid offer `{id}`: {reason}")]
    InvalidOffer { id: String, reason: String },
    #[error("invalid demand `{id}`: {reason}")]
    InvalidDemand { id: String, reason: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("schedule of `{seller}` violates {row}")]
    PolytopeViolation { seller: String, row: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub buyer_id: String,
    pub node_id: String,
    /// Fixed load per hour, MWh.
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOffer {
    pub seller_id: String,
    pub node_id: String,
    /// Technology label, free text.
    pub kind: String,
    pub p_min: f64,
    /// Hourly maximum output, MW.
    pub p_max: Vec<f64>,
    pub min_uptime: usize,
    /// EUR/MWh.
    pub var_cost: f64,
    /// EUR per committed hour.
    pub fixed_cost: f64,
}

impl GeneratorOffer {
    /// Offer with a constant maximum output over `hours`.
    pub fn flat(
        seller_id: impl Into<String>,
        node_id: impl Into<String>,
        p_min: f64,
        p_max: f64,
        hours: usize,
        var_cost: f64,
        fixed_cost: f64,
    ) -> Self {
        Self {
            seller_id: seller_id.into(),
            node_id: node_id.into(),
            kind: String::new(),
            p_min,
            p_max: vec![p_max; hours],
            min_uptime: 1,
            var_cost,
            fixed_cost,
        }
    }

    pub fn with_uptime(mut self, hours: usize) -> Self {
        self.min_uptime = hours;
        self
    }

    pub fn with_kind(mut self, kind: impl Into<String>) -> Self {
        self.kind = kind.into();
        self
    }

    fn validate(&self, hours: usize) -> Result<(), MarketError> {
        let err = |reason: String| MarketError::InvalidOffer {
            id: self.seller_id.clone(),
            reason,
        };
        if self.p_max.len() != hours {
            return Err(err(format!("{} hourly maxima for a {hours}-hour horizon", self.p_max.len())));
        }
        if !(self.p_min >= 0.0) {
            return Err(err(format!("negative minimum output {}", self.p_min)));
        }
        if self.p_max.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(err("maximum output must be finite and non-negative".into()));
        }
        if self.min_uptime < 1 {
            return Err(err("minimum uptime must be at least one hour".into()));
        }
        if self.min_uptime > hours {
            return Err(err(format!(
                "minimum uptime {} exceeds the {hours}-hour horizon",
                self.min_uptime
            )));
        }
        if !self.var_cost.is_finite() || !self.fixed_cost.is_finite() {
            return Err(err("costs must be finite".into()));
        }
        Ok(())
    }

    /// Whether the unit can run in hour `t` at all (P̲ ≤ P̄(t)).
    pub fn can_run(&self, t: usize) -> bool {
        self.p_min <= self.p_max[t] + POLY_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub network: Network,
    pub zones: ZoneMap,
    pub buyers: Vec<DemandSeries>,
    pub sellers: Vec<GeneratorOffer>,
    pub hours: usize,
    /// Value of lost load, EUR/MWh.
    pub voll: f64,
    seller_nodes: Vec<usize>,
    buyer_nodes: Vec<usize>,
}

impl MarketInstance {
    pub fn new(
        network: Network,
        zones: ZoneMap,
        buyers: Vec<DemandSeries>,
        sellers: Vec<GeneratorOffer>,
        hours: usize,
        voll: f64,
    ) -> Result<Self, MarketError> {
        if hours == 0 {
            return Err(MarketError::Invalid("horizon must contain at least one hour".into()));
        }
        let report = validate_network(&network);
        if !report.is_ok() {
            return Err(MarketError::Invalid(format!("network errors: {:?}", report.errors)));
        }
        if !zones.is_valid_for(&network) {
            return Err(GridError::InvalidZones("zone map does not cover the network".into()).into());
        }
        if !(voll > 0.0 && voll.is_finite()) {
            return Err(MarketError::Invalid(format!("value of lost load {voll} must be positive")));
        }
        let mut seller_nodes = Vec::with_capacity(sellers.len());
        let mut ids = std::collections::HashSet::new();
        for s in &sellers {
            s.validate(hours)?;
            if !ids.insert(s.seller_id.clone()) {
                return Err(MarketError::Invalid(format!("duplicate seller id `{}`", s.seller_id)));
            }
            seller_nodes.push(network.node_index(&s.node_id)?);
        }
        let mut buyer_nodes = Vec::with_capacity(buyers.len());
        let mut ids = std::collections::HashSet::new();
        for b in &buyers {
            if b.profile.len() != hours {
                return Err(MarketError::InvalidDemand {
                    id: b.buyer_id.clone(),
                    reason: format!("{} hourly values for a {hours}-hour horizon", b.profile.len()),
                });
            }
            if b.profile.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(MarketError::InvalidDemand {
                    id: b.buyer_id.clone(),
                    reason: "load must be finite and non-negative".into(),
                });
            }
            if !ids.insert(b.buyer_id.clone()) {
                return Err(MarketError::Invalid(format!("duplicate buyer id `{}`", b.buyer_id)));
            }
            buyer_nodes.push(network.node_index(&b.node_id)?);
        }
        Ok(Self {
            network,
            zones,
            buyers,
            sellers,
            hours,
            voll,
            seller_nodes,
            buyer_nodes,
        })
    }

    pub fn seller_node(&self, s: usize) -> usize {
        self.seller_nodes[s]
    }

    pub fn buyer_node(&self, b: usize) -> usize {
        self.buyer_nodes[b]
    }

    pub fn total_demand(&self, t: usize) -> f64 {
        self.buyers.iter().map(|b| b.profile[t]).sum()
    }

    /// Same instance on a different network (same node set).
    pub fn with_network(&self, network: Network) -> Result<Self, MarketError> {
        Self::new(
            network,
            self.zones.clone(),
            self.buyers.clone(),
            self.sellers.clone(),
            self.hours,
            self.voll,
        )
    }

    pub fn with_zones(&self, zones: ZoneMap) -> Result<Self, MarketError> {
        Self::new(
            self.network.clone(),
            zones,
            self.buyers.clone(),
            self.sellers.clone(),
            self.hours,
            self.voll,
        )
    }
}

/// Per-seller, per-hour dispatch, commitment and startup indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dispatch: Vec<Vec<f64>>,
    pub commitment: Vec<Vec<bool>>,
    pub startup: Vec<Vec<bool>>,
}

impl Schedule {
    pub fn idle(sellers: usize, hours: usize) -> Self {
        Self {
            dispatch: vec![vec![0.0; hours]; sellers],
            commitment: vec![vec![false; hours]; sellers],
            startup: vec![vec![false; hours]; sellers],
        }
    }

    /// Builds a schedule from dispatch and commitment, with the smallest
    /// startup indicators the polytope admits (no startup in the first hour).
    pub fn from_commitment(dispatch: Vec<Vec<f64>>, commitment: Vec<Vec<bool>>) -> Self {
        let startup = commitment.iter().map(|u| minimal_startups(u)).collect();
        Self {
            dispatch,
            commitment,
            startup,
        }
    }

    pub fn seller(&self, s: usize) -> SellerSchedule<'_> {
        SellerSchedule {
            dispatch: &self.dispatch[s],
            commitment: &self.commitment[s],
            startup: &self.startup[s],
        }
    }
}

pub fn minimal_startups(commitment: &[bool]) -> Vec<bool> {
    (0..commitment.len())
        .map(|t| t > 0 && commitment[t] && !commitment[t - 1])
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SellerSchedule<'a> {
    pub dispatch: &'a [f64],
    pub commitment: &'a [bool],
    pub startup: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcVar {
    Dispatch(usize),
    Commit(usize),
    Startup(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcRowKind {
    MinOutput,
    MaxOutput,
    StartupLink,
    Uptime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcRow {
    pub kind: UcRowKind,
    pub hour: usize,
    pub terms: Vec<(UcVar, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl UcRow {
    pub fn label(&self) -> String {
        let k = match self.kind {
            UcRowKind::MinOutput => "min-output",
            UcRowKind::MaxOutput => "max-output",
            UcRowKind::StartupLink => "startup-link",
            UcRowKind::Uptime => "min-uptime",
        };
        format!("{k}[t={}]", self.hour)
    }
}

/// The seller's polytope over (y, u, φ) as linear rows.
///
/// Dispatch exists only at the seller's own node, so off-node dispatch needs no
/// rows. The first hour carries no startup link or uptime window; windows for
/// later hours are truncated at the horizon start.
pub fn build_uc_constraints(offer: &GeneratorOffer, hours: usize) -> Result<Vec<UcRow>, MarketError> {
    offer.validate(hours)?;
    let mut rows = Vec::new();
    for t in 0..hours {
        rows.push(UcRow {
            kind: UcRowKind::MinOutput,
            hour: t,
            terms: vec![(UcVar::Dispatch(t), 1.0), (UcVar::Commit(t), -offer.p_min)],
            sense: Sense::Ge,
            rhs: 0.0,
        });
        rows.push(UcRow {
            kind: UcRowKind::MaxOutput,
            hour: t,
            terms: vec![(UcVar::Dispatch(t), 1.0), (UcVar::Commit(t), -offer.p_max[t])],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for t in 1..hours {
        rows.push(UcRow {
            kind: UcRowKind::StartupLink,
            hour: t,
            terms: vec![
                (UcVar::Startup(t), 1.0),
                (UcVar::Commit(t), -1.0),
                (UcVar::Commit(t - 1), 1.0),
            ],
            sense: Sense::Ge,
            rhs: 0.0,
        });
        let first = (t + 1).saturating_sub(offer.min_uptime);
        let mut terms: Vec<(UcVar, f64)> = (first..=t).map(|i| (UcVar::Startup(i), 1.0)).collect();
        terms.push((UcVar::Commit(t), -1.0));
        rows.push(UcRow {
            kind: UcRowKind::Uptime,
            hour: t,
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    Ok(rows)
}

/// Checks a seller schedule against every polytope row.
pub fn check_schedule(offer: &GeneratorOffer, sched: SellerSchedule<'_>) -> Result<(), MarketError> {
    let hours = sched.dispatch.len();
    if sched.commitment.len() != hours || sched.startup.len() != hours {
        return Err(MarketError::Invalid(format!(
            "schedule of `{}` has inconsistent lengths",
            offer.seller_id
        )));
    }
    let rows = build_uc_constraints(offer, hours)?;
    for row in &rows {
        let act: f64 = row
            .terms
            .iter()
            .map(|&(v, a)| {
                a * match v {
                    UcVar::Dispatch(t) => sched.dispatch[t],
                    UcVar::Commit(t) => f64::from(u8::from(sched.commitment[t])),
                    UcVar::Startup(t) => f64::from(u8::from(sched.startup[t])),
                }
            })
            .sum();
        let tol = POLY_TOL * (1.0 + row.rhs.abs() + offer.p_max.get(row.hour).copied().unwrap_or(0.0));
        let ok = match row.sense {
            Sense::Le => act <= row.rhs + tol,
            Sense::Ge => act >= row.rhs - tol,
            Sense::Eq => (act - row.rhs).abs() <= tol,
        };
        if !ok {
            return Err(MarketError::PolytopeViolation {
                seller: offer.seller_id.clone(),
                row: row.label(),
            });
        }
    }
    Ok(())
}

/// Σ g·y + Σ h·u for a schedule inside the seller's polytope.
pub fn cost_of(offer: &GeneratorOffer, sched: SellerSchedule<'_>) -> Result<f64, MarketError> {
    check_schedule(offer, sched)?;
    Ok(cost_unchecked(offer, sched.dispatch, sched.commitment))
}

pub(crate) fn cost_unchecked(offer: &GeneratorOffer, dispatch: &[f64], commitment: &[bool]) -> f64 {
    let var: f64 = dispatch.iter().map(|y| offer.var_cost * y).sum();
    let fixed = commitment.iter().filter(|&&u| u).count() as f64 * offer.fixed_cost;
    var + fixed
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schedule_ok(offer: &GeneratorOffer, u: &[bool], y: &[f64]) -> Result<(), MarketError> {
        let phi = minimal_startups(u);
        check_schedule(
            offer,
            SellerSchedule {
                dispatch: y,
                commitment: u,
                startup: &phi,
            },
        )
    }

    #[test]
    fn unit_uptime_degenerates_to_startup_bound() {
        let offer = GeneratorOffer::flat("g", "n", 0.0, 10.0, 3, 1.0, 0.0);
        let rows = build_uc_constraints(&offer, 3).unwrap();
        let uptime: Vec<_> = rows.iter().filter(|r| r.kind == UcRowKind::Uptime).collect();
        assert_eq!(uptime.len(), 2);
        for r in uptime {
            assert_eq!(
                r.terms,
                vec![(UcVar::Startup(r.hour), 1.0), (UcVar::Commit(r.hour), -1.0)]
            );
        }
    }

    #[test]
    fn three_hour_uptime_window_rejects_short_run() {
        let offer = GeneratorOffer::flat("g", "n", 0.0, 10.0, 4, 1.0, 0.0).with_uptime(3);
        let err = schedule_ok(&offer, &[false, true, true, false], &[0.0; 4]).unwrap_err();
        assert_eq!(
            err,
            MarketError::PolytopeViolation {
                seller: "g".into(),
                row: "min-uptime[t=3]".into()
            }
        );
        assert!(schedule_ok(&offer, &[false, true, true, true], &[0.0; 4]).is_ok());
        // a unit already on in the first hour carries no window
        assert!(schedule_ok(&offer, &[true, false, false, false], &[0.0; 4]).is_ok());
    }

    #[test]
    fn committed_box() {
        let offer = GeneratorOffer::flat("g", "n", 10.0, 50.0, 1, 1.0, 0.0);
        assert!(schedule_ok(&offer, &[true], &[10.0]).is_ok());
        assert!(schedule_ok(&offer, &[true], &[50.0]).is_ok());
        assert!(schedule_ok(&offer, &[true], &[9.0]).is_err());
        assert!(schedule_ok(&offer, &[true], &[51.0]).is_err());
        assert!(schedule_ok(&offer, &[false], &[1.0]).is_err());
    }

    #[test]
    fn uptime_longer_than_horizon_is_rejected() {
        let offer = GeneratorOffer::flat("g", "n", 0.0, 10.0, 2, 1.0, 0.0).with_uptime(3);
        assert!(matches!(
            build_uc_constraints(&offer, 2),
            Err(MarketError::InvalidOffer { .. })
        ));
    }

    #[test]
    fn costs() {
        let idle = GeneratorOffer::flat("g", "n", 0.0, 50.0, 2, 20.0, 100.0);
        let sched = Schedule::idle(1, 2);
        assert_eq!(cost_of(&idle, sched.seller(0)).unwrap(), 0.0);

        let g2 = GeneratorOffer::flat("G2", "n", 0.0, 50.0, 1, 20.0, 100.0);
        let s = Schedule::from_commitment(vec![vec![10.0]], vec![vec![true]]);
        assert_eq!(cost_of(&g2, s.seller(0)).unwrap(), 300.0);

        let s4 = GeneratorOffer::flat("s4", "v4", 0.0, 200.0, 1, 40.0, 0.0);
        let s = Schedule::from_commitment(vec![vec![50.0]], vec![vec![true]]);
        assert_eq!(cost_of(&s4, s.seller(0)).unwrap(), 2000.0);

        let bad = Schedule::from_commitment(vec![vec![60.0]], vec![vec![true]]);
        assert!(cost_of(&g2, bad.seller(0)).is_err());
    }

    proptest! {
        #[test]
        fn cost_is_additive_and_homogeneous(
            ys in proptest::collection::vec(0.0f64..50.0, 1..6),
            g in 0.0f64..100.0,
            h in 0.0f64..500.0,
            k in 0.1f64..10.0,
        ) {
            let hours = ys.len();
            let offer = GeneratorOffer::flat("g", "n", 0.0, 50.0, hours, g, h);
            let u = vec![true; hours];
            let s = Schedule::from_commitment(vec![ys.clone()], vec![u.clone()]);
            let total = cost_of(&offer, s.seller(0)).unwrap();
            let per_hour: f64 = (0..hours)
                .map(|t| {
                    let o = GeneratorOffer::flat("g", "n", 0.0, 50.0, 1, g, h);
                    let s = Schedule::from_commitment(vec![vec![ys[t]]], vec![vec![true]]);
                    cost_of(&o, s.seller(0)).unwrap()
                })
                .sum();
            prop_assert!((total - per_hour).abs() < 1e-9 * (1.0 + total.abs()));
            let scaled = GeneratorOffer::flat("g", "n", 0.0, 50.0, hours, k * g, k * h);
            let c2 = cost_of(&scaled, s.seller(0)).unwrap();
            prop_assert!((c2 - k * total).abs() < 1e-9 * (1.0 + c2.abs()));
        }
    }
}
