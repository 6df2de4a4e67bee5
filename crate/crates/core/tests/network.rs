use gridclear::clearing::{clear_national, clear_nodal, clear_zonal, MarketOutcome};
use gridclear::fixtures;
use gridclear::grid::{dc_flows, Line, Network, Node, ZoneMap};
use gridclear::ingest::{
    disaggregate_demand, gen_synthetic, load_instance, scale_renewables, write_instance, InstancePaths, RunConfig,
    SyntheticSpec,
};
use gridclear::market::{DemandSeries, GeneratorOffer, MarketInstance, DEFAULT_VOLL};
use gridclear::redispatch::feasibility_check;
use proptest::prelude::*;

/// Triangle a-b-c with cheap generation at `a` and load at `c`.
fn triangle(limit_ac: f64) -> MarketInstance {
    let network = Network::new(
        vec![Node::new("a"), Node::new("b"), Node::new("c")],
        vec![
            Line::new("a", "b", 10.0, 1000.0),
            Line::new("b", "c", 10.0, 1000.0),
            Line::new("a", "c", 10.0, limit_ac),
        ],
        0.0,
    )
    .unwrap();
    let zones = ZoneMap::single(&network, "z");
    MarketInstance::new(
        network,
        zones,
        vec![DemandSeries {
            buyer_id: "load".into(),
            node_id: "c".into(),
            profile: vec![90.0, 60.0],
        }],
        vec![
            GeneratorOffer::flat("ga", "a", 0.0, 200.0, 2, 10.0, 0.0),
            GeneratorOffer::flat("gc", "c", 0.0, 200.0, 2, 50.0, 0.0),
        ],
        2,
        DEFAULT_VOLL,
    )
    .unwrap()
}

fn injections(inst: &MarketInstance, out: &MarketOutcome, t: usize) -> Vec<f64> {
    let mut inj = vec![0.0; inst.network.nodes().len()];
    for s in 0..inst.sellers.len() {
        inj[inst.seller_node(s)] += out.schedule.dispatch[s][t];
    }
    for b in 0..inst.buyers.len() {
        inj[inst.buyer_node(b)] -= out.served[b][t];
    }
    inj
}

fn assert_kirchhoff(inst: &MarketInstance, out: &MarketOutcome) {
    let net = &inst.network;
    assert_eq!(dc_flows(net, &out.angles, inst.hours).unwrap(), out.flows);
    for t in 0..inst.hours {
        let inj = injections(inst, out, t);
        let mut balance = inj.clone();
        for l in 0..net.lines().len() {
            let (a, b) = net.endpoints(l);
            balance[a] -= out.flows[l][t];
            balance[b] += out.flows[l][t];
        }
        assert!(balance.iter().all(|r| r.abs() < 1e-6), "hour {t}: {balance:?}");
        for l in 0..net.lines().len() {
            assert!(out.flows[l][t].abs() <= net.effective_limit(l) + 1e-6);
        }
    }
}

#[test]
fn triangle_flows_obey_both_laws() {
    // 90 MW from a to c splits 2:1 over the direct line and the two-hop path
    let inst = triangle(1000.0);
    let out = clear_nodal(&inst, 0.0).unwrap();
    assert_kirchhoff(&inst, &out);
    assert!((out.flows[2][0] - 60.0).abs() < 1e-6);
    assert!((out.flows[0][0] - 30.0).abs() < 1e-6);
    // loop law: angle differences around the cycle cancel
    let loop_sum = out.flows[0][0] / 10.0 + out.flows[1][0] / 10.0 - out.flows[2][0] / 10.0;
    assert!(loop_sum.abs() < 1e-9);

    // capping the direct line at 30 MW lets a deliver only 45 MW in hour 0
    let tight = triangle(30.0);
    let out = clear_nodal(&tight, 0.0).unwrap();
    assert_kirchhoff(&tight, &out);
    assert!((out.schedule.dispatch[0][0] - 45.0).abs() < 1e-6);
    assert!((out.generation_cost - (45.0 * 10.0 + 45.0 * 50.0 + 45.0 * 10.0 + 15.0 * 50.0)).abs() < 1e-6);
}

#[test]
fn susceptance_scaling_leaves_dispatch_unchanged() {
    let base = fixtures::ex_2n();
    let out = clear_nodal(&base, 0.0).unwrap();
    for factor in [0.1, 3.0, 250.0] {
        let scaled = base.with_network(base.network.scale_susceptances(factor)).unwrap();
        let o = clear_nodal(&scaled, 0.0).unwrap();
        assert_eq!(o.schedule.commitment, out.schedule.commitment);
        for (a, b) in o.schedule.dispatch.iter().flatten().zip(out.schedule.dispatch.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((o.flows[0][0] - out.flows[0][0]).abs() < 1e-6);
        assert!((o.generation_cost - out.generation_cost).abs() < 1e-6);
    }
    assert!((out.generation_cost - (50.0 * 10.0 + 30.0 * 30.0)).abs() < 1e-9);
}

#[test]
fn unlimited_lines_agree_with_national() {
    for seed in 0..8 {
        let inst = gen_synthetic(&SyntheticSpec::new(seed, 5, 5, 3, 1.0)).unwrap();
        let wide = inst.with_network(inst.network.scale_limits(1e6)).unwrap();
        let national = clear_national(&wide, 0.0).unwrap().objective;
        let nodal = clear_nodal(&wide, 0.0).unwrap().objective;
        let zonal = clear_zonal(&wide, &wide.zones, 1.0, 0.0).unwrap().objective;
        assert!((national - nodal).abs() < 1e-6 * national.max(1.0), "seed {seed}");
        assert!((national - zonal).abs() < 1e-6 * national.max(1.0), "seed {seed}");
    }
}

#[test]
fn nodal_outcomes_are_physically_feasible() {
    for seed in 0..10 {
        let inst = gen_synthetic(&SyntheticSpec::new(seed, 6, 5, 3, 0.8)).unwrap();
        let out = clear_nodal(&inst, 0.0).unwrap();
        assert_kirchhoff(&inst, &out);
        assert!(feasibility_check(&inst, &out).unwrap().is_feasible(), "seed {seed}");
    }
}

#[test]
fn instance_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for inst in [fixtures::ex_b(), fixtures::ex_uc3(), gen_synthetic(&SyntheticSpec::new(4, 6, 6, 4, 0.5)).unwrap()] {
        write_instance(&inst, &RunConfig::default(), dir.path()).unwrap();
        let loaded = load_instance(&InstancePaths::in_dir(dir.path())).unwrap();
        assert_eq!(loaded.instance, inst);
        assert!(loaded.validation.is_ok());
        // writing the loaded copy reproduces the files byte for byte
        let again = tempfile::tempdir().unwrap();
        write_instance(&loaded.instance, &loaded.config, again.path()).unwrap();
        for f in ["nodes.csv", "lines.csv", "generators.csv", "demand.csv", "zones.csv", "config.json"] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(again.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}

proptest! {
    #[test]
    fn disaggregation_conserves_energy(
        profile in prop::collection::vec(0.0f64..5000.0, 1..24),
        bases in prop::collection::vec(0.0f64..100.0, 1..8),
    ) {
        prop_assume!(bases.iter().sum::<f64>() > 1e-3);
        let named: Vec<(String, f64)> = bases.iter().enumerate().map(|(i, &b)| (format!("n{i}"), b)).collect();
        let series = disaggregate_demand(&profile, &named).unwrap();
        prop_assert_eq!(series.len(), bases.len());
        for (t, &total) in profile.iter().enumerate() {
            let sum: f64 = series.iter().map(|s| s.profile[t]).sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total.max(1.0));
            prop_assert!(series.iter().all(|s| s.profile[t] >= 0.0));
        }
    }

    #[test]
    fn renewable_scaling_is_proportional(
        caps in prop::collection::vec(1.0f64..500.0, 1..6),
        shares in prop::collection::vec(0.0f64..=1.0, 1..24),
    ) {
        let total: f64 = caps.iter().sum();
        let aggregate: Vec<f64> = shares.iter().map(|s| s * total).collect();
        let units = scale_renewables(&aggregate, &caps).unwrap();
        for (t, &a) in aggregate.iter().enumerate() {
            let sum: f64 = units.iter().map(|u| u[t]).sum();
            prop_assert!((sum - a).abs() <= 1e-9 * a.max(1.0));
            for (u, &c) in units.iter().zip(&caps) {
                prop_assert!(u[t] <= c * (1.0 + 1e-12));
            }
        }
    }
}
