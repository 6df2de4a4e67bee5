//! Simplified Euphemia: clear, price uniformly per zone, and forbid the
//! commitments of loss-making accepted sellers until nobody needs a
//! make-whole payment.

use serde::Serialize;

use crate::clearing::{clear, Configuration, MarketOutcome, DEFAULT_INTERCONNECTOR_FRACTION};
use crate::clearing::model::{location_of, modelled_lines};
use crate::grid::ZoneMap;
use crate::market::MarketInstance;
use crate::pricing::{ip_prices, settle, PriceSurface, PricingError, PricingRule, Settlement};

pub const DEFAULT_MAX_ITERS: usize = 200;

/// Utility below −tolerance marks a paradoxically accepted seller.
const LOSS_TOL: f64 = 1e-6;

/// A cross-zonal flow running from the higher-priced to the lower-priced zone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdverseFlow {
    pub line: usize,
    pub hour: usize,
    pub flow: f64,
    /// Price at the receiving end minus price at the sending end.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EuphemiaResult {
    pub outcome: MarketOutcome,
    pub prices: PriceSurface,
    pub settlement: Settlement,
    pub iterations: usize,
    /// (seller, hour) commitments forced to zero.
    pub cuts: Vec<(usize, usize)>,
    /// Final objective minus the unconstrained clearing objective, EUR.
    pub welfare_loss: f64,
    /// Sellers left uncommitted in some hour that would profit at the final prices.
    pub paradoxically_rejected: Vec<String>,
    pub adverse_flows: Vec<AdverseFlow>,
    /// False when the iteration limit stopped the loop.
    pub converged: bool,
}

/// Runs the cut loop with uniform prices per zone of `zones` (national when
/// `zones` has a single zone).
pub fn run_euphemia(
    inst: &MarketInstance,
    zones: &ZoneMap,
    gap: f64,
    max_iters: usize,
) -> Result<EuphemiaResult, PricingError> {
    let config = if zones.zone_count() <= 1 {
        Configuration::National
    } else {
        Configuration::Zonal {
            zones: zones.clone(),
            interconnector_fraction: DEFAULT_INTERCONNECTOR_FRACTION,
        }
    };
    run_euphemia_with(inst, &config, gap, max_iters)
}

/// As [`run_euphemia`] for an explicit national or zonal configuration.
pub fn run_euphemia_with(
    inst: &MarketInstance,
    config: &Configuration,
    gap: f64,
    max_iters: usize,
) -> Result<EuphemiaResult, PricingError> {
    let base = clear(inst, config, gap, &[])?;
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut outcome = base.clone();
    let mut iterations = 0;
    let max_iters = max_iters.max(1);
    loop {
        iterations += 1;
        let prices = ip_prices(inst, &outcome)?;
        let settlement = settle(inst, &outcome, &prices)?;
        let losers: Vec<usize> = settlement
            .participants
            .iter()
            .take(inst.sellers.len())
            .enumerate()
            .filter(|(_, p)| p.utility < -LOSS_TOL * p.cost.max(1.0))
            .map(|(s, _)| s)
            .collect();
        let converged = losers.is_empty();
        if converged || iterations >= max_iters {
            if !converged {
                log::warn!("euphemia stopped after {iterations} iterations with {} loss-making sellers", losers.len());
            }
            let prices = prices.with_rule(PricingRule::Euphemia);
            let settlement = Settlement {
                rule: PricingRule::Euphemia,
                ..settlement
            };
            let paradoxically_rejected = inst
                .sellers
                .iter()
                .enumerate()
                .filter(|&(s, _)| {
                    outcome.schedule.commitment[s].iter().any(|&u| !u) && settlement.participants[s].gloc > LOSS_TOL
                })
                .map(|(_, o)| o.seller_id.clone())
                .collect();
            let adverse_flows = adverse_flows(inst, &outcome, &prices)?;
            for f in &adverse_flows {
                log::warn!(
                    "line {} hour {} carries {:.3} MW from the higher-priced zone",
                    f.line,
                    f.hour,
                    f.flow
                );
            }
            return Ok(EuphemiaResult {
                welfare_loss: outcome.objective - base.objective,
                outcome,
                prices,
                settlement,
                iterations,
                cuts,
                paradoxically_rejected,
                adverse_flows,
                converged,
            });
        }
        for s in losers {
            for (t, &on) in outcome.schedule.commitment[s].iter().enumerate() {
                if on && !cuts.contains(&(s, t)) {
                    cuts.push((s, t));
                }
            }
        }
        cuts.sort_unstable();
        log::debug!("euphemia iteration {iterations}: {} cuts", cuts.len());
        outcome = clear(inst, config, gap, &cuts)?;
    }
}

fn adverse_flows(
    inst: &MarketInstance,
    outcome: &MarketOutcome,
    prices: &PriceSurface,
) -> Result<Vec<AdverseFlow>, PricingError> {
    let config = &outcome.configuration;
    let mut found = Vec::new();
    for (l, _) in modelled_lines(inst, config)? {
        let (a, b) = inst.network.endpoints(l);
        for t in 0..inst.hours {
            let flow = outcome.flows[l][t];
            let spread = prices.at_location(location_of(config, b), t) - prices.at_location(location_of(config, a), t);
            if flow * spread < -LOSS_TOL * (1.0 + flow.abs()) {
                found.push(AdverseFlow { line: l, hour: t, flow, spread });
            }
        }
    }
    Ok(found)
}
