//! Small hand-checkable instances used throughout tests, docs and the CLI.

use crate::grid::{Line, Network, Node, ZoneMap};
use crate::market::{DemandSeries, GeneratorOffer, MarketInstance, DEFAULT_VOLL};

fn demand(id: &str, node: &str, profile: Vec<f64>) -> DemandSeries {
    DemandSeries {
        buyer_id: id.into(),
        node_id: node.into(),
        profile,
    }
}

/// Six nodes, two lines into `v5`, four sellers and 100 MWh of load at `v5`.
/// Margin 0; zones default to the two-zone split.
pub fn ex_b() -> MarketInstance {
    let nodes = (1..=6).map(|i| Node::new(format!("v{i}"))).collect();
    let lines = vec![Line::new("v3", "v5", 1.0, 50.0), Line::new("v4", "v5", 1.0, 100.0)];
    let network = Network::new(nodes, lines, 0.0).unwrap();
    let sellers = [("s1", "v1", 1.0), ("s2", "v2", 3.0), ("s3", "v3", 2.0), ("s4", "v4", 40.0)]
        .into_iter()
        .map(|(id, node, g)| GeneratorOffer::flat(id, node, 0.0, 200.0, 1, g, 0.0))
        .collect();
    let zones = ex_b_zones_2(&network);
    MarketInstance::new(
        network,
        zones,
        vec![demand("b1", "v5", vec![100.0])],
        sellers,
        1,
        DEFAULT_VOLL,
    )
    .unwrap()
}

/// {v1, v2, v3, v4} | {v5, v6}
pub fn ex_b_zones_2(network: &Network) -> ZoneMap {
    ZoneMap::new(
        network,
        &[("v1", "z1"), ("v2", "z1"), ("v3", "z1"), ("v4", "z1"), ("v5", "z2"), ("v6", "z2")],
    )
    .unwrap()
}

/// {v2, v4, v5} | {v1, v3} | {v6}
pub fn ex_b_zones_3(network: &Network) -> ZoneMap {
    ZoneMap::new(
        network,
        &[("v2", "z1"), ("v4", "z1"), ("v5", "z1"), ("v1", "z2"), ("v3", "z2"), ("v6", "z3")],
    )
    .unwrap()
}

/// Two nodes joined by a 50 MW line; cheap generation at `A`, 80 MWh of load
/// at `B`. Margin 0, one hour.
pub fn ex_2n() -> MarketInstance {
    ex_2n_with_limit(50.0)
}

pub fn ex_2n_with_limit(limit: f64) -> MarketInstance {
    let network = Network::new(
        vec![Node::new("A"), Node::new("B")],
        vec![Line::new("A", "B", 10.0, limit)],
        0.0,
    )
    .unwrap();
    let zones = ZoneMap::single(&network, "z");
    MarketInstance::new(
        network,
        zones,
        vec![demand("load", "B", vec![80.0])],
        vec![
            GeneratorOffer::flat("A", "A", 0.0, 100.0, 1, 10.0, 0.0),
            GeneratorOffer::flat("B", "B", 0.0, 100.0, 1, 30.0, 0.0),
        ],
        1,
        DEFAULT_VOLL,
    )
    .unwrap()
}

/// One node, one hour, 60 MWh of load; G1 at 10 EUR/MWh, G2 at 20 EUR/MWh
/// plus 100 EUR per committed hour.
pub fn ex_uc() -> MarketInstance {
    uc_instance(false)
}

/// [`ex_uc`] plus G3 at 35 EUR/MWh without fixed cost.
pub fn ex_uc3() -> MarketInstance {
    uc_instance(true)
}

fn uc_instance(with_g3: bool) -> MarketInstance {
    let network = Network::new(vec![Node::new("n")], Vec::new(), 0.0).unwrap();
    let zones = ZoneMap::single(&network, "z");
    let mut sellers = vec![
        GeneratorOffer::flat("G1", "n", 0.0, 50.0, 1, 10.0, 0.0),
        GeneratorOffer::flat("G2", "n", 0.0, 50.0, 1, 20.0, 100.0),
    ];
    if with_g3 {
        sellers.push(GeneratorOffer::flat("G3", "n", 0.0, 50.0, 1, 35.0, 0.0));
    }
    MarketInstance::new(
        network,
        zones,
        vec![demand("load", "n", vec![60.0])],
        sellers,
        1,
        DEFAULT_VOLL,
    )
    .unwrap()
}
