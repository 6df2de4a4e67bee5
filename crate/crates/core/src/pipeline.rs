//! Runs clearing, redispatch, pricing and settlement for a set of network
//! configurations and pricing rules, and writes `outcomes.csv`, `prices.csv`,
//! `settlement.csv` and `summary.json`.
//!
//! Files are deterministic: rows follow the order of configurations, rules,
//! participants and hours; numbers are written with six decimals; JSON keys
//! are sorted.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::clearing::{clear, Configuration, Granularity, MarketOutcome};
use crate::euphemia::{run_euphemia_with, DEFAULT_MAX_ITERS};
use crate::grid::ZoneMap;
use crate::ingest::RunConfig;
use crate::market::MarketInstance;
use crate::pricing::{ch_prices, ip_prices, join_prices, settle, PriceSurface, PricingRule, Settlement};
use crate::redispatch::{redispatch_min_cost, redispatch_min_volume, FlowCap, RedispatchError, RedispatchResult};
use crate::report::{surface_stats, variance_decomposition};

/// A configuration to run, with the label used in output files.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfiguration {
    pub label: String,
    pub configuration: Configuration,
}

impl PipelineConfiguration {
    pub fn national() -> Self {
        Self {
            label: "national".into(),
            configuration: Configuration::National,
        }
    }

    pub fn nodal() -> Self {
        Self {
            label: "nodal".into(),
            configuration: Configuration::Nodal,
        }
    }

    pub fn zonal(zones: ZoneMap, interconnector_fraction: f64) -> Self {
        Self {
            label: format!("zonal({})", zones.zone_count()),
            configuration: Configuration::Zonal {
                zones,
                interconnector_fraction,
            },
        }
    }
}

/// Gives repeated labels a `#2`, `#3`, ... suffix.
pub fn dedup_labels(configs: &mut [PipelineConfiguration]) {
    let mut seen: Vec<String> = Vec::new();
    for c in configs.iter_mut() {
        let base = c.label.clone();
        let mut k = 1;
        while seen.contains(&c.label) {
            k += 1;
            c.label = format!("{base}#{k}");
        }
        seen.push(c.label.clone());
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub summary: Value,
    /// Stage failures, as `label/stage: message`.
    pub failures: Vec<String>,
}

impl PipelineReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Redispatch {
    min_cost: RedispatchResult,
    min_volume: RedispatchResult,
    flow_cap: FlowCap,
}

struct ConfigStage {
    outcome: Result<MarketOutcome, String>,
    redispatch: Option<Result<Redispatch, String>>,
}

enum CellResult {
    Done { prices: PriceSurface, settlement: Settlement, extra: Map<String, Value> },
    Skipped(String),
    Failed(String),
}

/// Formats a number with six decimals, without negative zero.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn round6(x: f64) -> Value {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        json!(0.0)
    } else {
        json!(r)
    }
}

fn run_redispatch(
    inst: &MarketInstance,
    outcome: &MarketOutcome,
    cap: FlowCap,
    gap: f64,
) -> Result<Redispatch, String> {
    let attempt = |cap| -> Result<(RedispatchResult, RedispatchResult), RedispatchError> {
        Ok((
            redispatch_min_cost(inst, outcome, cap, gap)?,
            redispatch_min_volume(inst, outcome, cap, gap)?,
        ))
    };
    match attempt(cap) {
        Ok((min_cost, min_volume)) => Ok(Redispatch {
            min_cost,
            min_volume,
            flow_cap: cap,
        }),
        Err(RedispatchError::InfeasibleUnderZonalCap) => {
            log::warn!("redispatch infeasible under zonal flow caps; using physical limits");
            let (min_cost, min_volume) = attempt(FlowCap::Physical).map_err(|e| e.to_string())?;
            Ok(Redispatch {
                min_cost,
                min_volume,
                flow_cap: FlowCap::Physical,
            })
        }
        Err(e) => Err(e.to_string()),
    }
}

fn run_cell(
    inst: &MarketInstance,
    pc: &PipelineConfiguration,
    outcome: &MarketOutcome,
    rule: PricingRule,
    gap: f64,
) -> CellResult {
    let config = &pc.configuration;
    let mut extra = Map::new();
    let priced = match rule {
        PricingRule::Ip => ip_prices(inst, outcome).map(|p| (p, outcome.clone())),
        PricingRule::Ch => ch_prices(inst, outcome).map(|p| (p, outcome.clone())),
        PricingRule::Join => join_prices(inst, outcome).map(|p| (p, outcome.clone())),
        PricingRule::Euphemia => {
            if config.granularity() == Granularity::Nodal {
                return CellResult::Skipped("uniform zonal pricing does not apply to nodal clearing".into());
            }
            run_euphemia_with(inst, config, gap, DEFAULT_MAX_ITERS).map(|r| {
                extra.insert("iterations".into(), json!(r.iterations));
                extra.insert("converged".into(), json!(r.converged));
                extra.insert("welfare_loss_eur".into(), round6(r.welfare_loss));
                extra.insert("generation_cost_eur".into(), round6(r.outcome.generation_cost));
                extra.insert("unserved_mwh".into(), round6(r.outcome.total_unserved()));
                extra.insert(
                    "cuts".into(),
                    json!(r
                        .cuts
                        .iter()
                        .map(|&(s, t)| json!([inst.sellers[s].seller_id, t]))
                        .collect::<Vec<_>>()),
                );
                extra.insert("paradoxically_rejected".into(), json!(r.paradoxically_rejected));
                (r.prices, r.outcome)
            })
        }
    };
    let (prices, settled_outcome) = match priced {
        Ok(v) => v,
        Err(e) => return CellResult::Failed(e.to_string()),
    };
    match settle(inst, &settled_outcome, &prices) {
        Ok(settlement) => CellResult::Done {
            prices,
            settlement,
            extra,
        },
        Err(e) => CellResult::Failed(e.to_string()),
    }
}

/// Runs every configuration and rule on `inst`; cells run on up to `jobs`
/// threads. Writes the output files to `out_dir` when given.
pub fn run_pipeline(
    inst: &MarketInstance,
    config: &RunConfig,
    configurations: &[PipelineConfiguration],
    rules: &[PricingRule],
    jobs: usize,
    out_dir: Option<&Path>,
) -> io::Result<PipelineReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(io::Error::other)?;
    let gap = config.mip_gap;

    let stages: Vec<ConfigStage> = pool.install(|| {
        configurations
            .par_iter()
            .map(|pc| {
                let outcome = clear(inst, &pc.configuration, gap, &[]).map_err(|e| e.to_string());
                let redispatch = match (&outcome, pc.configuration.granularity()) {
                    (Ok(out), Granularity::National | Granularity::Zonal) => {
                        Some(run_redispatch(inst, out, config.redispatch_flow_cap, gap))
                    }
                    _ => None,
                };
                ConfigStage { outcome, redispatch }
            })
            .collect()
    });

    let cells: Vec<(usize, PricingRule)> = (0..configurations.len())
        .flat_map(|c| rules.iter().map(move |&r| (c, r)))
        .collect();
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(c, rule)| match &stages[c].outcome {
                Ok(out) => run_cell(inst, &configurations[c], out, rule, gap),
                Err(e) => CellResult::Skipped(format!("clearing failed: {e}")),
            })
            .collect()
    });

    let mut failures = Vec::new();
    let mut outcomes_csv = String::from(
        "configuration,seller_id,node_id,hour,dispatch_mwh,committed,redispatch_up_mwh,redispatch_down_mwh\n",
    );
    let mut prices_csv = String::from("configuration,rule,location,hour,price_eur_mwh\n");
    let mut settlement_csv = String::from(
        "configuration,rule,participant_id,role,node_id,revenue_eur,cost_eur,utility_eur,gloc_eur,lloc_eur,mwp_eur\n",
    );
    let mut config_json = Map::new();

    for (c, pc) in configurations.iter().enumerate() {
        let stage = &stages[c];
        let mut entry = Map::new();
        entry.insert("granularity".into(), json!(pc.configuration.granularity().to_string()));
        let out = match &stage.outcome {
            Ok(out) => out,
            Err(e) => {
                failures.push(format!("{}/clearing: {e}", pc.label));
                entry.insert("error".into(), json!(e));
                config_json.insert(pc.label.clone(), Value::Object(entry));
                continue;
            }
        };
        entry.insert("generation_cost_eur".into(), round6(out.generation_cost));
        entry.insert("unserved_mwh".into(), round6(out.total_unserved()));
        entry.insert("mip_gap".into(), round6(out.mip_gap));

        let (rd_cost, rd_volume, up, down) = match &stage.redispatch {
            None => {
                entry.insert("redispatch_flow_cap".into(), Value::Null);
                entry.insert("min_volume_redispatch".into(), json!({"cost_eur": 0.0, "volume_mwh": 0.0}));
                (0.0, 0.0, None, None)
            }
            Some(Ok(r)) => {
                entry.insert("redispatch_flow_cap".into(), json!(r.flow_cap.to_string()));
                entry.insert(
                    "min_volume_redispatch".into(),
                    json!({"cost_eur": round6(r.min_volume.cost), "volume_mwh": round6(r.min_volume.volume)}),
                );
                (r.min_cost.cost, r.min_cost.volume, Some(&r.min_cost.up), Some(&r.min_cost.down))
            }
            Some(Err(e)) => {
                failures.push(format!("{}/redispatch: {e}", pc.label));
                entry.insert("redispatch_error".into(), json!(e));
                (0.0, 0.0, None, None)
            }
        };
        entry.insert("redispatch_cost_eur".into(), round6(rd_cost));
        entry.insert("redispatch_volume_mwh".into(), round6(rd_volume));
        entry.insert("total_cost_eur".into(), round6(out.generation_cost + rd_cost));

        for (s, offer) in inst.sellers.iter().enumerate() {
            for t in 0..inst.hours {
                let _ = writeln!(
                    outcomes_csv,
                    "{},{},{},{},{},{},{},{}",
                    pc.label,
                    offer.seller_id,
                    offer.node_id,
                    t,
                    fmt6(out.schedule.dispatch[s][t]),
                    u8::from(out.schedule.commitment[s][t]),
                    fmt6(up.map_or(0.0, |u| u[s][t])),
                    fmt6(down.map_or(0.0, |d| d[s][t])),
                );
            }
        }

        let mut rules_json = Map::new();
        for (i, &(cc, rule)) in cells.iter().enumerate() {
            if cc != c {
                continue;
            }
            let mut cell = Map::new();
            match &results[i] {
                CellResult::Skipped(reason) => {
                    cell.insert("status".into(), json!("skipped"));
                    cell.insert("reason".into(), json!(reason));
                }
                CellResult::Failed(e) => {
                    failures.push(format!("{}/{rule}: {e}", pc.label));
                    cell.insert("status".into(), json!("failed"));
                    cell.insert("error".into(), json!(e));
                }
                CellResult::Done {
                    prices,
                    settlement,
                    extra,
                } => {
                    cell.insert("status".into(), json!("ok"));
                    for (k, p) in prices.prices.iter().enumerate() {
                        for (t, &v) in p.iter().enumerate() {
                            let _ = writeln!(prices_csv, "{},{rule},{},{t},{}", pc.label, prices.locations[k], fmt6(v));
                        }
                    }
                    for p in &settlement.participants {
                        let role = match p.role {
                            crate::pricing::ParticipantRole::Seller => "seller",
                            crate::pricing::ParticipantRole::Buyer => "buyer",
                        };
                        let _ = writeln!(
                            settlement_csv,
                            "{},{rule},{},{role},{},{},{},{},{},{},{}",
                            pc.label,
                            p.id,
                            p.node,
                            fmt6(p.revenue),
                            fmt6(p.cost),
                            fmt6(p.utility),
                            fmt6(p.gloc),
                            fmt6(p.lloc),
                            fmt6(p.mwp)
                        );
                    }
                    if let Ok(stats) = surface_stats(prices, config.price_cap_eur_mwh) {
                        cell.insert(
                            "price_stats".into(),
                            json!({
                                "mean": round6(stats.mean),
                                "median": round6(stats.median),
                                "std": round6(stats.std),
                                "outliers": stats.outliers,
                            }),
                        );
                    }
                    if prices.granularity == Granularity::Nodal {
                        if let Ok(d) = variance_decomposition(prices, Some(&inst.zones)) {
                            cell.insert(
                                "variance".into(),
                                json!({
                                    "congestion_mean": round6(d.mean_congestion()),
                                    "time_mean": round6(d.mean_time()),
                                }),
                            );
                        }
                    }
                    let mwp: Map<String, Value> = settlement
                        .sellers()
                        .map(|p| (p.id.clone(), round6(p.mwp)))
                        .collect();
                    cell.insert("mwp_eur".into(), Value::Object(mwp));
                    cell.insert("total_mwp_eur".into(), round6(settlement.total_mwp));
                    cell.insert("total_gloc_eur".into(), round6(settlement.total_gloc));
                    cell.insert("total_lloc_eur".into(), round6(settlement.total_lloc));
                    cell.insert("join_objective_eur".into(), round6(settlement.join_objective));
                    cell.insert("congestion_rent_eur".into(), round6(settlement.congestion_rent));
                    cell.extend(extra.clone());
                }
            }
            rules_json.insert(rule.to_string(), Value::Object(cell));
        }
        entry.insert("rules".into(), Value::Object(rules_json));
        config_json.insert(pc.label.clone(), Value::Object(entry));
    }

    let summary = json!({
        "instance": {
            "nodes": inst.network.nodes().len(),
            "lines": inst.network.lines().len(),
            "sellers": inst.sellers.len(),
            "buyers": inst.buyers.len(),
            "hours": inst.hours,
        },
        "settings": {
            "mip_gap": round6(config.mip_gap),
            "margin": round6(inst.network.margin()),
            "interconnector_fraction": round6(config.interconnector_fraction),
            "redispatch_flow_cap": config.redispatch_flow_cap.to_string(),
            "price_cap_eur_mwh": round6(config.price_cap_eur_mwh),
            "voll_eur_mwh": round6(inst.voll),
        },
        "configurations": Value::Object(config_json),
        "status": if failures.is_empty() { "ok" } else { "partial" },
        "failures": failures,
    });

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("outcomes.csv"), outcomes_csv)?;
        fs::write(dir.join("prices.csv"), prices_csv)?;
        fs::write(dir.join("settlement.csv"), settlement_csv)?;
        let text = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
        fs::write(dir.join("summary.json"), text + "\n")?;
    }
    Ok(PipelineReport { summary, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn exact_config() -> RunConfig {
        RunConfig {
            margin: 0.0,
            interconnector_fraction: 1.0,
            mip_gap: 0.0,
            redispatch_flow_cap: FlowCap::Physical,
            ..RunConfig::default()
        }
    }

    #[test]
    fn ex_b_totals() {
        let inst = fixtures::ex_b();
        let configs = vec![
            PipelineConfiguration::national(),
            PipelineConfiguration::zonal(fixtures::ex_b_zones_2(&inst.network), 1.0),
            PipelineConfiguration::zonal(fixtures::ex_b_zones_3(&inst.network), 1.0),
        ];
        let r = run_pipeline(&inst, &exact_config(), &configs, &[PricingRule::Ip], 2, None).unwrap();
        assert!(r.is_complete(), "{:?}", r.failures);
        let total = |label: &str| r.summary["configurations"][label]["total_cost_eur"].as_f64().unwrap();
        assert_eq!(total("national"), 2300.0);
        assert_eq!(total("zonal(2)"), 2300.0);
        assert_eq!(total("zonal(3)"), 2500.0);
    }

    #[test]
    fn nodal_has_no_redispatch() {
        let inst = fixtures::ex_b();
        let r = run_pipeline(&inst, &exact_config(), &[PipelineConfiguration::nodal()], &[PricingRule::Ip], 1, None)
            .unwrap();
        let cell = &r.summary["configurations"]["nodal"];
        assert_eq!(cell["redispatch_cost_eur"], json!(0.0));
        assert_eq!(cell["redispatch_volume_mwh"], json!(0.0));
        assert_eq!(cell["total_cost_eur"], cell["generation_cost_eur"]);
    }

    #[test]
    fn mwp_row_across_rules() {
        let inst = fixtures::ex_uc3();
        let r = run_pipeline(
            &inst,
            &exact_config(),
            &[PipelineConfiguration::national()],
            &PricingRule::ALL,
            4,
            None,
        )
        .unwrap();
        assert!(r.is_complete(), "{:?}", r.failures);
        let rules = &r.summary["configurations"]["national"]["rules"];
        let mwp = |rule: &str| rules[rule]["mwp_eur"]["G2"].as_f64().unwrap();
        assert_eq!(mwp("ip"), 100.0);
        assert_eq!(mwp("ch"), 80.0);
        assert_eq!(mwp("join"), 80.0);
        assert_eq!(mwp("euphemia"), 0.0);
    }

    #[test]
    fn repeated_labels_get_suffixes() {
        let mut v = vec![PipelineConfiguration::nodal(), PipelineConfiguration::nodal()];
        dedup_labels(&mut v);
        assert_eq!(v[1].label, "nodal#2");
    }
}
