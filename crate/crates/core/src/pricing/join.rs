use crate::clearing::model::{location_count, location_of, modelled_lines};
use crate::clearing::MarketOutcome;
use crate::lpmilp::{solve_lp, LinearProgram, Objective, Sense, Status, VarId};
use crate::market::{cost_unchecked, MarketInstance};

use super::{ip_prices, PriceSurface, PricingError, PricingRule};

/// Relative slack on the optimal Join objective when picking among optimal
/// price vectors.
const OPT_SLACK: f64 = 1e-9;

/// Prices minimising Σ_s max(LLOC_s, MWP_s) + network LLOC, with prices
/// bounded by ±VOLL.
///
/// The network's best rent is bounded through the dual of its rent LP:
/// dual feasibility rows plus one row making `m_net` dominate the dual
/// objective minus the actual rent. Among optimal price vectors the one
/// closest (L1) to the IP prices is returned, which pins prices at locations
/// the objective does not constrain.
pub fn join_prices(inst: &MarketInstance, outcome: &MarketOutcome) -> Result<PriceSurface, PricingError> {
    let config = &outcome.configuration;
    let hours = inst.hours;
    let nloc = location_count(inst, config);
    let v = inst.voll;

    let mut lp = LinearProgram::new(Objective::Minimize);
    let p: Vec<Vec<VarId>> = (0..nloc)
        .map(|k| (0..hours).map(|t| lp.continuous(format!("p[{k},{t}]"), -v, v, 0.0)).collect())
        .collect();
    let mut epigraph: Vec<VarId> = Vec::new();

    for (s, offer) in inst.sellers.iter().enumerate() {
        let id = &offer.seller_id;
        let k = location_of(config, inst.seller_node(s));
        let y = &outcome.schedule.dispatch[s];
        let u = &outcome.schedule.commitment[s];
        let m = lp.continuous(format!("m[{id}]"), 0.0, f64::INFINITY, 1.0);
        epigraph.push(m);

        // LLOC: Σ λ − Σ (p − g) y*
        let mut lloc = vec![(m, 1.0)];
        let mut var_margin = 0.0;
        for t in 0..hours {
            lloc.push((p[k][t], y[t]));
            var_margin += offer.var_cost * y[t];
            if !u[t] {
                continue;
            }
            let lam = lp.continuous(format!("lambda[{id},{t}]"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
            for (end, bound) in [("max", offer.p_max[t]), ("min", offer.p_min)] {
                lp.add_row(
                    format!("lambda-{end}[{id},{t}]"),
                    [(lam, 1.0), (p[k][t], -bound)],
                    Sense::Ge,
                    -offer.var_cost * bound,
                );
            }
            lloc.push((lam, -1.0));
        }
        lp.add_row(format!("lloc[{id}]"), lloc, Sense::Ge, var_margin);

        // MWP: c(y*) − Σ p y*
        let mut mwp = vec![(m, 1.0)];
        mwp.extend((0..hours).map(|t| (p[k][t], y[t])));
        lp.add_row(format!("mwp[{id}]"), mwp, Sense::Ge, cost_unchecked(offer, y, u));
    }

    let lines = modelled_lines(inst, config)?;
    if !lines.is_empty() {
        let net = &inst.network;
        let m_net = lp.continuous("m[network]", 0.0, f64::INFINITY, 1.0);
        epigraph.push(m_net);
        let mut dominate = vec![(m_net, 1.0)];
        for t in 0..hours {
            let mut theta_cols: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.nodes().len()];
            for &(l, cap) in &lines {
                let (a, b) = net.endpoints(l);
                let (ka, kb) = (location_of(config, a), location_of(config, b));
                let susceptance = net.lines()[l].susceptance;
                let mu = lp.continuous(format!("mu[{l},{t}]"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
                let alpha = lp.continuous(format!("alpha[{l},{t}]"), 0.0, f64::INFINITY, 0.0);
                let beta = lp.continuous(format!("beta[{l},{t}]"), 0.0, f64::INFINITY, 0.0);
                // flow column: μ + α − β = p_to − p_from
                lp.add_row(
                    format!("flow-dual[{l},{t}]"),
                    [(mu, 1.0), (alpha, 1.0), (beta, -1.0), (p[kb][t], -1.0), (p[ka][t], 1.0)],
                    Sense::Eq,
                    0.0,
                );
                theta_cols[a].push((mu, -susceptance));
                theta_cols[b].push((mu, susceptance));
                dominate.push((alpha, -cap));
                dominate.push((beta, -cap));
                let f = outcome.flows[l][t];
                dominate.push((p[kb][t], f));
                dominate.push((p[ka][t], -f));
            }
            for (n, mut col) in theta_cols.into_iter().enumerate() {
                if col.is_empty() {
                    continue;
                }
                if let Some(bound) = net.angle_bound() {
                    let up = lp.continuous(format!("gamma+[{n},{t}]"), 0.0, f64::INFINITY, 0.0);
                    let down = lp.continuous(format!("gamma-[{n},{t}]"), 0.0, f64::INFINITY, 0.0);
                    col.push((up, 1.0));
                    col.push((down, -1.0));
                    dominate.push((up, -bound));
                    dominate.push((down, -bound));
                }
                lp.add_row(format!("theta-dual[{n},{t}]"), col, Sense::Eq, 0.0);
            }
        }
        lp.add_row("network-lloc", dominate, Sense::Ge, 0.0);
    }

    let first = solve_lp(&lp)?;
    if first.status != Status::Optimal {
        return Err(PricingError::NotSolved {
            what: "Join pricing LP".into(),
            status: first.status,
        });
    }

    // second pass: stay optimal, move as close to IP prices as possible
    let anchor = ip_prices(inst, outcome)?;
    let best = first.objective;
    lp.add_row(
        "join-optimal",
        epigraph.iter().map(|&m| (m, 1.0)),
        Sense::Le,
        best + OPT_SLACK * best.abs().max(1.0),
    );
    for var in &mut lp.vars {
        var.cost = 0.0;
    }
    for k in 0..nloc {
        for t in 0..hours {
            let target = anchor.prices[k][t].clamp(-v, v);
            let d = lp.continuous(format!("dist[{k},{t}]"), 0.0, f64::INFINITY, 1.0);
            lp.add_row(format!("dist+[{k},{t}]"), [(d, 1.0), (p[k][t], -1.0)], Sense::Ge, -target);
            lp.add_row(format!("dist-[{k},{t}]"), [(d, 1.0), (p[k][t], 1.0)], Sense::Ge, target);
        }
    }
    let res = solve_lp(&lp)?;
    let res = if res.status == Status::Optimal { res } else { first };
    let prices = p
        .iter()
        .map(|row| row.iter().map(|&var| res.value(var)).collect())
        .collect();
    Ok(PriceSurface::new(inst, config, PricingRule::Join, prices))
}
