//! Node placement, random-waypoint mobility and the unit-disk link model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, RngStreams, Scheduler, SimTime};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Fixed propagation delay added to every hop.
pub const PROPAGATION_DELAY: SimTime = SimTime::from_micros(1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub range: f64,
    pub bandwidth_bps: f64,
    pub data_payload: u32,
    pub propagation: SimTime,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            range: 250.0,
            bandwidth_bps: 2_000_000.0,
            data_payload: 512,
            propagation: PROPAGATION_DELAY,
        }
    }
}

impl RadioParams {
    /// Serialization time of `bytes` at the link bandwidth (rounded up to the
    /// next microsecond) plus the propagation constant.
    pub fn latency_for(&self, bytes: u32) -> SimTime {
        let us = (f64::from(bytes) * 8.0 * 1e6 / self.bandwidth_bps).ceil() as u64;
        SimTime::from_micros(us) + self.propagation
    }

    /// Per-hop latency of a full data packet including the 8-byte header.
    pub fn per_hop_latency(&self) -> SimTime {
        self.latency_for(self.data_payload + crate::aomsr::HEADER_BYTES)
    }
}

/// One random-waypoint leg: travel from `origin` to `target`, then hold
/// until `pause_until`. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointState {
    pub origin: Position,
    pub depart: f64,
    pub target: Position,
    pub speed: f64,
    pub arrive: f64,
    pub pause_until: f64,
}

impl WaypointState {
    pub fn position_at(&self, t: f64) -> Position {
        if t <= self.depart {
            return self.origin;
        }
        if t >= self.arrive {
            return self.target;
        }
        let dist = self.origin.distance(self.target);
        let travelled = self.speed * (t - self.depart);
        let frac = travelled / dist;
        Position {
            x: self.origin.x + (self.target.x - self.origin.x) * frac,
            y: self.origin.y + (self.target.y - self.origin.y) * frac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub area: Area,
    pub max_speed: f64,
    pub pause: f64,
}

/// Lower bound on drawn speeds, avoiding the zero-speed degeneracy.
pub const MIN_SPEED: f64 = 0.1;

/// Draws the next leg. Random draws are taken in the order target x,
/// target y, speed.
pub fn draw_leg(
    rng: &mut ChaCha8Rng,
    params: &MobilityParams,
    from: Position,
    depart: f64,
) -> WaypointState {
    let target = Position {
        x: rng.gen_range(0.0..=params.area.width),
        y: rng.gen_range(0.0..=params.area.height),
    };
    let lo = MIN_SPEED.min(params.max_speed);
    let speed = if lo < params.max_speed {
        rng.gen_range(lo..=params.max_speed)
    } else {
        params.max_speed
    };
    let arrive = depart + from.distance(target) / speed;
    WaypointState {
        origin: from,
        depart,
        target,
        speed,
        arrive,
        pause_until: arrive + params.pause,
    }
}

struct Motion {
    leg: WaypointState,
    rng: ChaCha8Rng,
}

enum NodeMotion {
    Fixed(Position),
    Moving(Motion),
}

/// Random-waypoint mobility for every node. Each node draws from its own
/// stream (`mobility/<id>`), so queries for one node never disturb another.
pub struct Mobility {
    params: MobilityParams,
    nodes: Vec<NodeMotion>,
}

impl Mobility {
    pub fn new(initial: &[Position], params: MobilityParams, streams: &RngStreams) -> Self {
        let nodes = initial
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if params.max_speed > 0.0 {
                    let mut rng = streams.stream(&format!("mobility/{i}"));
                    let leg = draw_leg(&mut rng, &params, p, 0.0);
                    NodeMotion::Moving(Motion { leg, rng })
                } else {
                    NodeMotion::Fixed(p)
                }
            })
            .collect();
        Mobility { params, nodes }
    }

    pub fn fixed(initial: &[Position], area: Area) -> Self {
        Mobility {
            params: MobilityParams {
                area,
                max_speed: 0.0,
                pause: 0.0,
            },
            nodes: initial.iter().map(|&p| NodeMotion::Fixed(p)).collect(),
        }
    }

    pub fn params(&self) -> &MobilityParams {
        &self.params
    }

    pub fn is_static(&self) -> bool {
        self.nodes.iter().all(|n| matches!(n, NodeMotion::Fixed(_)))
    }

    /// Current leg of a moving node after advancing it to `t`.
    pub fn leg_at(&mut self, node: NodeId, t: f64) -> Option<WaypointState> {
        let params = self.params;
        match &mut self.nodes[node.index()] {
            NodeMotion::Fixed(_) => None,
            NodeMotion::Moving(m) => {
                while t >= m.leg.pause_until {
                    let from = m.leg.target;
                    let depart = m.leg.pause_until;
                    m.leg = draw_leg(&mut m.rng, &params, from, depart);
                }
                Some(m.leg)
            }
        }
    }

    /// `t` must not precede the node's last waypoint assignment.
    pub fn position_at(&mut self, node: NodeId, t: f64) -> Position {
        if let NodeMotion::Fixed(p) = self.nodes[node.index()] {
            return p;
        }
        self.leg_at(node, t).expect("moving node").position_at(t)
    }
}

/// Uniform placement over the area from the `placement` stream.
pub fn random_placement(count: usize, area: Area, streams: &RngStreams) -> Vec<Position> {
    let mut rng = streams.stream("placement");
    (0..count)
        .map(|_| Position {
            x: rng.gen_range(0.0..=area.width),
            y: rng.gen_range(0.0..=area.height),
        })
        .collect()
}

/// How links between nodes are decided.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkModel {
    /// Connected when the Euclidean distance is at most the radio range.
    UnitDisk,
    /// Fixed undirected link set, for hand-built test topologies.
    Graph(BTreeSet<(NodeId, NodeId)>),
}

impl LinkModel {
    pub fn graph<I: IntoIterator<Item = (u32, u32)>>(edges: I) -> Self {
        LinkModel::Graph(
            edges
                .into_iter()
                .map(|(a, b)| (NodeId(a.min(b)), NodeId(a.max(b))))
                .collect(),
        )
    }
}

/// Outcome of a single-hop unicast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopOutcome {
    Scheduled { arrival: SimTime },
    LinkDrop,
}

pub struct Topology {
    radio: RadioParams,
    links: LinkModel,
    mobility: Mobility,
    link_drops: u64,
    failed: BTreeMap<(NodeId, NodeId), SimTime>,
}

impl Topology {
    pub fn new(radio: RadioParams, links: LinkModel, mobility: Mobility) -> Self {
        Topology {
            radio,
            links,
            mobility,
            link_drops: 0,
            failed: BTreeMap::new(),
        }
    }

    /// Takes the link between `a` and `b` down permanently from `at` on.
    pub fn fail_link(&mut self, a: NodeId, b: NodeId, at: SimTime) {
        let key = (a.min(b), a.max(b));
        let when = self.failed.entry(key).or_insert(at);
        *when = (*when).min(at);
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn node_count(&self) -> usize {
        self.mobility.nodes.len()
    }

    pub fn link_drops(&self) -> u64 {
        self.link_drops
    }

    pub fn is_static(&self) -> bool {
        self.mobility.is_static()
    }

    pub fn mobility_mut(&mut self) -> &mut Mobility {
        &mut self.mobility
    }

    pub fn position_at(&mut self, node: NodeId, t: SimTime) -> Position {
        self.mobility.position_at(node, t.as_secs_f64())
    }

    pub fn connected(&mut self, a: NodeId, b: NodeId, t: SimTime) -> bool {
        if a == b {
            return false;
        }
        if self.failed.get(&(a.min(b), a.max(b))).is_some_and(|&at| t >= at) {
            return false;
        }
        match &self.links {
            LinkModel::Graph(edges) => edges.contains(&(a.min(b), a.max(b))),
            LinkModel::UnitDisk => {
                let pa = self.position_at(a, t);
                let pb = self.position_at(b, t);
                pa.distance(pb) <= self.radio.range
            }
        }
    }

    /// Nodes other than `node` linked to it at `t`, in ascending id order.
    pub fn neighbors_of(&mut self, node: NodeId, t: SimTime) -> Vec<NodeId> {
        (0..self.node_count() as u32)
            .map(NodeId)
            .filter(|&other| self.connected(node, other, t))
            .collect()
    }

    /// Schedules a `PacketDelivery` of `payload` at `to` after one hop of a
    /// `bytes`-sized packet, or counts a link drop when `to` is out of reach.
    pub fn deliver<P>(
        &mut self,
        sched: &mut Scheduler<P>,
        from: NodeId,
        to: NodeId,
        bytes: u32,
        payload: P,
    ) -> HopOutcome {
        let now = sched.now();
        if !self.connected(from, to, now) {
            self.link_drops += 1;
            return HopOutcome::LinkDrop;
        }
        let arrival = now + self.radio.latency_for(bytes);
        sched
            .schedule(arrival, EventKind::PacketDelivery, payload)
            .expect("arrival is after now");
        HopOutcome::Scheduled { arrival }
    }
}
