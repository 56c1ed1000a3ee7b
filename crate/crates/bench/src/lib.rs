//! Benchmark inputs.

use aomsr_core::aodv::MultipathRouteEntry;
use aomsr_core::config::Attackers;
use aomsr_core::{NodeId, Protocol, Scenario, ScenarioConfig, SimTime};

pub const PER_HOP: SimTime = SimTime::from_micros(2081);

/// `k` node-disjoint routes from node 0 to node 1, route `p` having `n + p`
/// interior nodes.
pub fn ladder_mrt(k: u32, n: u32) -> Vec<MultipathRouteEntry> {
    let mut next = 2;
    (0..k)
        .map(|p| {
            let mut path = vec![NodeId(0)];
            for _ in 0..n + p {
                path.push(NodeId(next));
                next += 1;
            }
            path.push(NodeId(1));
            let hops = path.len() as u32 - 1;
            MultipathRouteEntry {
                destination: NodeId(1),
                dest_seq: 1,
                hop_count: hops,
                path,
                est_delay: PER_HOP.mul(u64::from(hops)),
            }
        })
        .collect()
}

/// Static ladder of `k` disjoint paths with `n` interior nodes each and an
/// optional black hole on the first path.
pub fn ladder(k: u32, n: u32, attacked: bool) -> Scenario {
    let node = |p: u32, i: u32| 2 + p * n + i;
    let mut edges = Vec::new();
    for p in 0..k {
        edges.push((0, node(p, 0)));
        for i in 1..n {
            edges.push((node(p, i - 1), node(p, i)));
        }
        edges.push((node(p, n - 1), 1));
    }
    let mut s = Scenario::static_graph(2 + k * n, edges, vec![(NodeId(0), NodeId(1))], Protocol::Aomsr);
    s.k_max = k.max(2) as usize;
    s.sim_time = SimTime::from_secs(20);
    s.traffic_stop = SimTime::from_secs(15);
    s.attackers = if attacked {
        Attackers::Explicit(vec![NodeId(node(0, n / 2))])
    } else {
        Attackers::Count(0)
    };
    s
}

/// Random waypoint run with one black hole.
pub fn mobile(node_count: u32, sim_secs: f64, protocol: Protocol) -> Scenario {
    let cfg = ScenarioConfig {
        node_count,
        sim_time: sim_secs,
        protocol,
        ..ScenarioConfig::default()
    };
    Scenario::from_config(&cfg, 7)
}
