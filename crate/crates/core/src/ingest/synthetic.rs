use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Line, Network, Node, ZoneMap};
use crate::market::{DemandSeries, GeneratorOffer, MarketInstance, DEFAULT_VOLL};

use super::{write_instance, IngestError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub nodes: usize,
    pub sellers: usize,
    pub hours: usize,
    /// 0 leaves every line wider than total capacity; 1 makes lines tight.
    pub congestion: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, nodes: usize, sellers: usize, hours: usize, congestion: f64) -> Self {
        Self {
            seed,
            nodes,
            sellers,
            hours,
            congestion,
        }
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Generates a random but reproducible instance.
///
/// Nodes form a chain with a few extra meshing lines. Every load node hosts
/// a flexible backup unit (no minimum output, one-hour uptime) large enough
/// for its local peak, so even the nodal clearing serves all load; the
/// remaining units are cheaper and may carry minimum outputs, fixed costs and
/// uptimes. Zones split the chain into up to three contiguous groups.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<MarketInstance, IngestError> {
    if spec.nodes == 0 || spec.sellers == 0 || spec.hours == 0 {
        return Err(IngestError::Invalid("synthetic sizes must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.congestion) {
        return Err(IngestError::Invalid(format!(
            "congestion level {} outside [0, 1]",
            spec.congestion
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;
    let hours = spec.hours;
    let node_ids: Vec<String> = (1..=n).map(|i| format!("n{i}")).collect();

    // load nodes and their backup units
    let load_count = rng.gen_range(1..=n.min(spec.sellers));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut load_nodes: Vec<usize> = order[..load_count].to_vec();
    if n > 1 && load_count == 1 && load_nodes[0] == 0 {
        // keep the single load node away from the chain head so cheap units upstream can matter
        load_nodes[0] = n - 1;
    }
    load_nodes.sort_unstable();

    let shape: Vec<f64> = (0..hours)
        .map(|t| 0.8 + 0.2 * (2.0 * PI * t as f64 / 24.0).sin() + rng.gen_range(-0.05..0.05))
        .collect();
    let mut buyers = Vec::new();
    let mut peaks = Vec::new();
    for &node in &load_nodes {
        let base: f64 = rng.gen_range(20.0..80.0);
        let profile: Vec<f64> = shape.iter().map(|f| round1(base * f)).collect();
        peaks.push(profile.iter().copied().fold(0.0, f64::max));
        buyers.push(DemandSeries {
            buyer_id: format!("b{}", buyers.len() + 1),
            node_id: node_ids[node].clone(),
            profile,
        });
    }

    let mut sellers = Vec::new();
    for (i, &node) in load_nodes.iter().enumerate() {
        let cap = (peaks[i] * 1.2).ceil().max(1.0);
        sellers.push(GeneratorOffer {
            seller_id: format!("g{}", sellers.len() + 1),
            node_id: node_ids[node].clone(),
            kind: "backup".into(),
            p_min: 0.0,
            p_max: vec![cap; hours],
            min_uptime: 1,
            var_cost: round1(rng.gen_range(45.0..90.0)),
            fixed_cost: round1(rng.gen_range(0.0..50.0)),
        });
    }
    while sellers.len() < spec.sellers {
        let node = rng.gen_range(0..n);
        let cap = rng.gen_range(20.0..100.0_f64).round();
        let p_min = if rng.gen_bool(0.4) {
            round1(cap * rng.gen_range(0.2..0.5))
        } else {
            0.0
        };
        let fixed_cost = if rng.gen_bool(0.5) {
            round1(rng.gen_range(20.0..300.0))
        } else {
            0.0
        };
        let min_uptime = rng.gen_range(1..=hours.min(3));
        sellers.push(GeneratorOffer {
            seller_id: format!("g{}", sellers.len() + 1),
            node_id: node_ids[node].clone(),
            kind: "thermal".into(),
            p_min,
            p_max: vec![cap; hours],
            min_uptime,
            var_cost: round1(rng.gen_range(5.0..45.0)),
            fixed_cost,
        });
    }

    let total_cap: f64 = sellers.iter().map(|s| s.p_max[0]).sum();
    let limit_for = |rng: &mut ChaCha8Rng| -> f64 {
        let tight = total_cap * rng.gen_range(0.05..0.3);
        let loose = total_cap + 1.0;
        (loose + (tight - loose) * spec.congestion).ceil().max(1.0)
    };
    let mut lines = Vec::new();
    for i in 1..n {
        let limit = limit_for(&mut rng);
        lines.push(Line::new(
            node_ids[i - 1].clone(),
            node_ids[i].clone(),
            round1(rng.gen_range(5.0..20.0)),
            limit,
        ));
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.gen_bool(0.2) {
                let limit = limit_for(&mut rng);
                lines.push(Line::new(
                    node_ids[i].clone(),
                    node_ids[j].clone(),
                    round1(rng.gen_range(5.0..20.0)),
                    limit,
                ));
            }
        }
    }

    let nodes = node_ids.iter().map(Node::new).collect();
    let network = Network::new(nodes, lines, 0.0)?;
    let zone_count = n.min(3);
    let assignments: Vec<(String, String)> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), format!("z{}", i * zone_count / n + 1)))
        .collect();
    let zones = ZoneMap::new(&network, &assignments)?;
    Ok(MarketInstance::new(network, zones, buyers, sellers, hours, DEFAULT_VOLL)?)
}

/// Generates an instance and writes it, with a config using margin 0, to `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<MarketInstance, IngestError> {
    let inst = gen_synthetic(spec)?;
    write_instance(&inst, &RunConfig::default(), dir)?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_national, clear_nodal};
    use crate::ingest::{load_instance, InstancePaths};

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec::new(7, 5, 4, 3, 0.6);
        write_synthetic(&spec, a.path()).unwrap();
        write_synthetic(&spec, b.path()).unwrap();
        for f in ["nodes.csv", "lines.csv", "generators.csv", "demand.csv", "zones.csv", "config.json"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let loaded = load_instance(&InstancePaths::in_dir(a.path())).unwrap();
        assert_eq!(loaded.instance, gen_synthetic(&spec).unwrap());
    }

    #[test]
    fn two_node_congested_shape() {
        let inst = gen_synthetic(&SyntheticSpec::new(1, 2, 2, 1, 1.0)).unwrap();
        assert_eq!(inst.network.nodes().len(), 2);
        assert_eq!(inst.network.lines().len(), 1);
        assert_eq!(inst.sellers.len(), 2);
        let out = clear_nodal(&inst, 0.0).unwrap();
        assert_eq!(out.total_unserved(), 0.0);
    }

    #[test]
    fn uncongested_nodal_equals_national() {
        for seed in 0..5 {
            let inst = gen_synthetic(&SyntheticSpec::new(seed, 4, 4, 2, 0.0)).unwrap();
            let nodal = clear_nodal(&inst, 0.0).unwrap();
            let national = clear_national(&inst, 0.0).unwrap();
            assert!((nodal.objective - national.objective).abs() < 1e-6, "seed {seed}");
        }
    }
}
