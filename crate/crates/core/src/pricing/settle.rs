use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::model::{location_of, modelled_lines};
use crate::clearing::{Configuration, MarketOutcome};
use crate::lpmilp::{solve_lp, solve_milp, LinearProgram, Objective, Sense, Status, VarKind};
use crate::market::{build_uc_constraints, cost_unchecked, MarketInstance, UcVar};

use super::{PriceSurface, PricingError, PricingRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantRole {
    Seller,
    Buyer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSettlement {
    pub id: String,
    pub role: ParticipantRole,
    pub node: String,
    /// Payment received (negative for buyers), EUR.
    pub revenue: f64,
    /// Production cost, EUR (zero for buyers).
    pub cost: f64,
    pub utility: f64,
    pub gloc: f64,
    pub lloc: f64,
    pub mwp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub rule: PricingRule,
    pub participants: Vec<ParticipantSettlement>,
    /// Σ flow × price difference over priced lines, EUR.
    pub congestion_rent: f64,
    /// Best achievable congestion rent minus the actual one, EUR. The
    /// network has no commitment, so its GLOC and LLOC coincide.
    pub network_lloc: f64,
    /// Σ GLOC over all participants including the network.
    pub total_gloc: f64,
    /// Σ LLOC over all participants including the network.
    pub total_lloc: f64,
    pub total_mwp: f64,
    /// Σ_s max(LLOC_s, MWP_s) + network LLOC.
    pub join_objective: f64,
}

impl Settlement {
    pub fn sellers(&self) -> impl Iterator<Item = &ParticipantSettlement> {
        self.participants.iter().filter(|p| p.role == ParticipantRole::Seller)
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantSettlement> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn seller_gloc(&self) -> f64 {
        self.sellers().map(|p| p.gloc).sum()
    }
}

/// Settles every participant of `outcome` at `prices`.
///
/// Seller GLOC comes from a best-response MILP over the seller's polytope;
/// LLOC keeps the outcome's commitments and takes the better end of each
/// hour's output interval. Buyers are valued at VOLL per MWh served, so their
/// lost opportunity is zero whenever prices stay at or below VOLL and load
/// is fully served.
pub fn settle(
    inst: &MarketInstance,
    outcome: &MarketOutcome,
    prices: &PriceSurface,
) -> Result<Settlement, PricingError> {
    prices.check_covers(inst)?;
    let hours = inst.hours;
    let nodes = inst.network.nodes();

    let sellers: Vec<ParticipantSettlement> = (0..inst.sellers.len())
        .into_par_iter()
        .map(|s| {
            let offer = &inst.sellers[s];
            let node = inst.seller_node(s);
            let y = &outcome.schedule.dispatch[s];
            let u = &outcome.schedule.commitment[s];
            let p: Vec<f64> = (0..hours).map(|t| prices.at_node(node, t)).collect();
            let revenue: f64 = (0..hours).map(|t| p[t] * y[t]).sum();
            let cost = cost_unchecked(offer, y, u);
            let utility = revenue - cost;
            let mut lloc = 0.0;
            for t in 0..hours {
                if u[t] {
                    let margin = p[t] - offer.var_cost;
                    let best = (margin * offer.p_min).max(margin * offer.p_max[t]);
                    lloc += best - margin * y[t];
                }
            }
            let best = best_response(inst, s, &p)?;
            // best response is at least the fixed-commitment optimum; clamp solver noise
            let gloc = (best - utility).max(lloc).max(0.0);
            Ok(ParticipantSettlement {
                id: offer.seller_id.clone(),
                role: ParticipantRole::Seller,
                node: nodes[node].id.clone(),
                revenue,
                cost,
                utility,
                gloc,
                lloc: lloc.max(0.0),
                mwp: (-utility).max(0.0),
            })
        })
        .collect::<Result<_, PricingError>>()?;

    let mut participants = sellers;
    for (b, buyer) in inst.buyers.iter().enumerate() {
        let node = inst.buyer_node(b);
        let mut payment = 0.0;
        let mut lost = 0.0;
        for t in 0..hours {
            let p = prices.at_node(node, t);
            let served = outcome.served[b][t];
            payment += p * served;
            let surplus = inst.voll - p;
            lost += surplus.max(0.0) * buyer.profile[t] - surplus * served;
        }
        participants.push(ParticipantSettlement {
            id: buyer.buyer_id.clone(),
            role: ParticipantRole::Buyer,
            node: nodes[node].id.clone(),
            revenue: -payment,
            cost: 0.0,
            utility: -payment,
            gloc: lost.max(0.0),
            lloc: lost.max(0.0),
            mwp: 0.0,
        });
    }

    let congestion_rent = actual_rent(inst, outcome, prices)?;
    let max_rent = max_congestion_rent(inst, &outcome.configuration, prices)?;
    let network_lloc = (max_rent - congestion_rent).max(0.0);
    let total_gloc = participants.iter().map(|p| p.gloc).sum::<f64>() + network_lloc;
    let total_lloc = participants.iter().map(|p| p.lloc).sum::<f64>() + network_lloc;
    let total_mwp = participants.iter().map(|p| p.mwp).sum();
    let join_objective = participants
        .iter()
        .filter(|p| p.role == ParticipantRole::Seller)
        .map(|p| p.lloc.max(p.mwp))
        .sum::<f64>()
        + network_lloc;
    Ok(Settlement {
        rule: prices.rule,
        participants,
        congestion_rent,
        network_lloc,
        total_gloc,
        total_lloc,
        total_mwp,
        join_objective,
    })
}

/// Most profitable schedule in the seller's polytope at prices `p`.
fn best_response(inst: &MarketInstance, s: usize, p: &[f64]) -> Result<f64, PricingError> {
    let offer = &inst.sellers[s];
    let hours = inst.hours;
    let mut lp = LinearProgram::new(Objective::Maximize);
    let y: Vec<_> = (0..hours)
        .map(|t| lp.continuous(format!("y[{t}]"), 0.0, f64::INFINITY, p[t] - offer.var_cost))
        .collect();
    let u: Vec<_> = (0..hours)
        .map(|t| lp.add_var(format!("u[{t}]"), 0.0, 1.0, -offer.fixed_cost, VarKind::Binary))
        .collect();
    let phi: Vec<_> = (0..hours)
        .map(|t| lp.continuous(format!("phi[{t}]"), 0.0, 1.0, 0.0))
        .collect();
    for row in build_uc_constraints(offer, hours).map_err(crate::clearing::ClearingError::from)? {
        let terms = row.terms.iter().map(|&(v, a)| {
            let var = match v {
                UcVar::Dispatch(t) => y[t],
                UcVar::Commit(t) => u[t],
                UcVar::Startup(t) => phi[t],
            };
            (var, a)
        });
        lp.add_row(row.label(), terms, row.sense, row.rhs);
    }
    let res = solve_milp(&lp, 0.0)?;
    if res.status != Status::Optimal {
        return Err(PricingError::NotSolved {
            what: format!("best response of `{}`", offer.seller_id),
            status: res.status,
        });
    }
    Ok(res.objective)
}

fn price_spread(prices: &PriceSurface, config: &Configuration, a: usize, b: usize, t: usize) -> f64 {
    prices.at_location(location_of(config, b), t) - prices.at_location(location_of(config, a), t)
}

fn actual_rent(inst: &MarketInstance, outcome: &MarketOutcome, prices: &PriceSurface) -> Result<f64, PricingError> {
    let config = &outcome.configuration;
    let mut rent = 0.0;
    for (l, _) in modelled_lines(inst, config)? {
        let (a, b) = inst.network.endpoints(l);
        for t in 0..inst.hours {
            rent += outcome.flows[l][t] * price_spread(prices, config, a, b, t);
        }
    }
    Ok(rent)
}

/// Largest congestion rent any DC-feasible flow pattern earns at `prices`
/// under `config`'s network representation.
pub fn max_congestion_rent(
    inst: &MarketInstance,
    config: &Configuration,
    prices: &PriceSurface,
) -> Result<f64, PricingError> {
    let lines = modelled_lines(inst, config)?;
    if lines.is_empty() {
        return Ok(0.0);
    }
    let net = &inst.network;
    let (lo, hi) = match net.angle_bound() {
        Some(b) => (-b, b),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let mut lp = LinearProgram::new(Objective::Maximize);
    for t in 0..inst.hours {
        let theta: Vec<_> = (0..net.nodes().len())
            .map(|n| lp.continuous(format!("theta[{n},{t}]"), lo, hi, 0.0))
            .collect();
        for &(l, cap) in &lines {
            let (a, b) = net.endpoints(l);
            let f = lp.continuous(format!("flow[{l},{t}]"), -cap, cap, price_spread(prices, config, a, b, t));
            let susceptance = net.lines()[l].susceptance;
            lp.add_row(
                format!("dc[{l},{t}]"),
                [(f, 1.0), (theta[a], -susceptance), (theta[b], susceptance)],
                Sense::Eq,
                0.0,
            );
        }
    }
    let res = solve_lp(&lp)?;
    if res.status != Status::Optimal {
        return Err(PricingError::NotSolved {
            what: "congestion rent LP".into(),
            status: res.status,
        });
    }
    Ok(res.objective)
}

/// Lost opportunity of the network operator at `prices`.
pub fn network_lloc(
    inst: &MarketInstance,
    outcome: &MarketOutcome,
    prices: &PriceSurface,
) -> Result<f64, PricingError> {
    let max = max_congestion_rent(inst, &outcome.configuration, prices)?;
    Ok((max - actual_rent(inst, outcome, prices)?).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_national, clear_nodal};
    use crate::fixtures;
    use crate::pricing::{ch_prices, ip_prices};

    fn uniform(inst: &MarketInstance, out: &MarketOutcome, p: f64) -> PriceSurface {
        PriceSurface::new(inst, &out.configuration, PricingRule::Ip, vec![vec![p; inst.hours]])
    }

    #[test]
    fn uc_example_at_ip_price() {
        let inst = fixtures::ex_uc();
        let out = clear_national(&inst, 0.0).unwrap();
        let s = settle(&inst, &out, &ip_prices(&inst, &out).unwrap()).unwrap();
        let g1 = s.participant("G1").unwrap();
        let g2 = s.participant("G2").unwrap();
        assert!(g1.mwp.abs() < 1e-9);
        assert!((g2.mwp - 100.0).abs() < 1e-6);
        assert!(g1.lloc.abs() < 1e-6 && g2.lloc.abs() < 1e-6);
        assert!((s.participant("load").unwrap().utility + 1200.0).abs() < 1e-6);
    }

    #[test]
    fn uc_example_at_ch_price() {
        let inst = fixtures::ex_uc();
        let out = clear_national(&inst, 0.0).unwrap();
        let s = settle(&inst, &out, &ch_prices(&inst, &out).unwrap()).unwrap();
        let g1 = s.participant("G1").unwrap();
        let g2 = s.participant("G2").unwrap();
        assert!(g1.gloc.abs() < 1e-6);
        assert!((g2.gloc - 80.0).abs() < 1e-6);
        assert!((g2.mwp - 80.0).abs() < 1e-6);
        assert!((s.join_objective - 80.0).abs() < 1e-6);
    }

    #[test]
    fn uc_example_gloc_scan() {
        // G2 best response: off below 22, full output above
        let inst = fixtures::ex_uc();
        let out = clear_national(&inst, 0.0).unwrap();
        for p in [0.0, 15.0, 20.0, 21.0, 22.0, 23.0, 30.0] {
            let s = settle(&inst, &out, &uniform(&inst, &out, p)).unwrap();
            let g2 = s.participant("G2").unwrap();
            let actual = 10.0 * p - 300.0;
            let best = (50.0 * (p - 20.0) - 100.0_f64).max(0.0);
            assert!((g2.gloc - (best - actual)).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn network_rent_on_congested_line() {
        let inst = fixtures::ex_2n();
        let out = clear_nodal(&inst, 0.0).unwrap();
        let ip = ip_prices(&inst, &out).unwrap();
        let s = settle(&inst, &out, &ip).unwrap();
        assert!((s.congestion_rent - 1000.0).abs() < 1e-6);
        assert!(s.network_lloc.abs() < 1e-6);

        // flat prices make congestion worthless but the flow still earns nothing
        let flat = PriceSurface::new(&inst, &out.configuration, PricingRule::Ip, vec![vec![20.0], vec![20.0]]);
        assert!(network_lloc(&inst, &out, &flat).unwrap().abs() < 1e-9);
        // reversed spread: best pattern ships 50 MW the other way
        let rev = PriceSurface::new(&inst, &out.configuration, PricingRule::Ip, vec![vec![30.0], vec![10.0]]);
        assert!((network_lloc(&inst, &out, &rev).unwrap() - 2000.0).abs() < 1e-6);
    }

    #[test]
    fn missing_prices_are_rejected() {
        let inst = fixtures::ex_2n();
        let out = clear_nodal(&inst, 0.0).unwrap();
        let mut p = ip_prices(&inst, &out).unwrap();
        p.prices.pop();
        assert!(matches!(settle(&inst, &out, &p), Err(PricingError::Coverage(_))));
    }
}
