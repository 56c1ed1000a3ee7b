#![allow(dead_code)]

use aomsr_core::config::{Attackers, Protocol};
use aomsr_core::engine::SimTime;
use aomsr_core::sim::Scenario;
use aomsr_core::topology::NodeId;

pub const SRC: NodeId = NodeId(0);
pub const DST: NodeId = NodeId(1);

/// Node id of interior hop `i` (0-based from the source) on ladder path `p`.
pub fn ladder_node(n: u32, p: u32, i: u32) -> NodeId {
    NodeId(2 + p * n + i)
}

/// `k` node-disjoint paths of `n` interior nodes each between node 0 and
/// node 1, plus an optional black hole replacing one interior node.
pub fn ladder(k: u32, n: u32, attacker: Option<(u32, u32)>, protocol: Protocol) -> Scenario {
    let mut edges = Vec::new();
    for p in 0..k {
        edges.push((SRC.0, ladder_node(n, p, 0).0));
        for i in 1..n {
            edges.push((ladder_node(n, p, i - 1).0, ladder_node(n, p, i).0));
        }
        edges.push((ladder_node(n, p, n - 1).0, DST.0));
    }
    let mut s = Scenario::static_graph(2 + k * n, edges, vec![(SRC, DST)], protocol);
    s.k_max = k.max(2) as usize;
    s.sim_time = SimTime::from_secs(20);
    s.traffic_stop = SimTime::from_secs(15);
    s.attackers = match attacker {
        Some((p, i)) => Attackers::Explicit(vec![ladder_node(n, p, i)]),
        None => Attackers::Count(0),
    };
    s
}
