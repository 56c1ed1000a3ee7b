//! Packet-level simulation of one scenario.
//!
//! Each run owns its scheduler, topology and per-node protocol state, so
//! independent runs can execute on separate threads.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{MetricsCollector, MetricsError, MetricsReport};
use crate::aodv::{
    aodv_prefers, handle_rreq, ControlKind, ControlPacket, MultipathRouteEntry, RouteTable,
    RreqAction, RreqFilter, DEFAULT_RREQ_RETRIES,
};
use crate::aomsr::{
    check_suspect_path, generate_permutation, select_multipaths, AlarmAction, AlarmPacket,
    AlarmRegistry, DestinationDht, MessageType, PBAckHeader, PathSelectionParams, PbaOutcome,
    Permutation, PermutationPolicy, SelectedPath, SelectionError, SenderDht, Verdict,
    HEADER_BYTES,
};
use crate::blackhole::{AttackerAction, AttackerProfile, BlackHole, Forwardable};
use crate::config::{AckTimeout, Attackers, Protocol, ScenarioConfig};
use crate::engine::{EventKind, RngStreams, Scheduler, SimEvent, SimTime};
use crate::topology::{
    random_placement, Area, HopOutcome, LinkModel, Mobility, MobilityParams, NodeId, Position,
    RadioParams, Topology,
};
use crate::trace::{Counter, TraceRecord, TraceSink, TrafficClass};

pub type FlowId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Random,
    Explicit(Vec<Position>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowSpec {
    /// One main flow plus `background` extra flows between random honest nodes.
    Random { background: u32 },
    Explicit(Vec<(NodeId, NodeId)>),
}

/// A single runnable experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub node_count: u32,
    pub area: Area,
    pub radio: RadioParams,
    pub placement: Placement,
    pub links: LinkModel,
    /// Links forced down from the given time on: `(at, a, b)`.
    pub link_failures: Vec<(SimTime, NodeId, NodeId)>,
    pub max_speed: f64,
    pub pause_time: f64,
    pub sim_time: SimTime,
    pub cbr_interval: SimTime,
    pub traffic_start: SimTime,
    /// No application packets are generated after this time.
    pub traffic_stop: SimTime,
    pub flows: FlowSpec,
    pub attackers: Attackers,
    pub k_max: usize,
    pub delta: SimTime,
    pub ack_timeout: AckTimeout,
    pub permutation: PermutationPolicy,
    pub allow_overlap: bool,
    pub rreq_retries: u32,
    pub queue_limit: usize,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig, seed: u64) -> Self {
        let sim_time = SimTime::from_secs_f64(cfg.sim_time);
        Scenario {
            id: cfg.scenario_id.clone(),
            seed,
            protocol: cfg.protocol,
            node_count: cfg.node_count,
            area: Area {
                width: cfg.area_width,
                height: cfg.area_height,
            },
            radio: RadioParams {
                range: cfg.radio_range,
                bandwidth_bps: cfg.bandwidth,
                data_payload: cfg.payload_bytes,
                ..RadioParams::default()
            },
            placement: Placement::Random,
            links: LinkModel::UnitDisk,
            link_failures: Vec::new(),
            max_speed: cfg.max_speed,
            pause_time: cfg.pause_time,
            sim_time,
            cbr_interval: SimTime::from_secs_f64(cfg.cbr_interval),
            traffic_start: SimTime::from_secs(1),
            traffic_stop: sim_time,
            flows: FlowSpec::Random {
                background: cfg.background_flow_count(),
            },
            attackers: cfg.attackers.clone(),
            k_max: cfg.k_max as usize,
            delta: SimTime::from_secs_f64(cfg.delta),
            ack_timeout: cfg.ack_timeout,
            permutation: cfg.permutation,
            allow_overlap: cfg.allow_overlap,
            rreq_retries: DEFAULT_RREQ_RETRIES,
            queue_limit: 64,
        }
    }

    /// A static hand-built topology on an explicit link graph.
    pub fn static_graph(
        node_count: u32,
        edges: impl IntoIterator<Item = (u32, u32)>,
        flows: Vec<(NodeId, NodeId)>,
        protocol: Protocol,
    ) -> Self {
        let cfg = ScenarioConfig {
            node_count,
            max_speed: 0.0,
            protocol,
            ..ScenarioConfig::default()
        };
        Scenario {
            placement: Placement::Explicit(vec![Position::default(); node_count as usize]),
            links: LinkModel::graph(edges),
            flows: FlowSpec::Explicit(flows),
            ..Scenario::from_config(&cfg, 1)
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("trace output: {0}")]
    Io(#[from] io::Error),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Route {
    hops: Vec<NodeId>,
    at: usize,
}

impl Route {
    fn new(hops: Vec<NodeId>) -> Self {
        Route { hops, at: 0 }
    }

    fn next(&self) -> Option<NodeId> {
        self.hops.get(self.at + 1).copied()
    }

    fn at_end(&self) -> bool {
        self.at + 1 >= self.hops.len()
    }
}

#[derive(Debug, Clone)]
enum Body {
    Rreq(ControlPacket),
    Rrep(ControlPacket),
    Rerr {
        flow: FlowId,
        ctrl: ControlPacket,
        route: Route,
    },
    Data {
        flow: FlowId,
        seq: u64,
        header: Option<PBAckHeader>,
        route: Route,
    },
    PathCheck {
        flow: FlowId,
        check: u64,
        header: PBAckHeader,
        suspect: Vec<NodeId>,
        route: Route,
    },
    Pba {
        flow: FlowId,
        header: PBAckHeader,
        route: Route,
    },
    Verdict {
        flow: FlowId,
        check: u64,
        verdict: Verdict,
        route: Route,
    },
    Alarm(AlarmPacket),
}

#[derive(Debug, Clone)]
struct Packet {
    id: u64,
    origin: NodeId,
    body: Body,
}

impl Packet {
    fn class(&self) -> TrafficClass {
        match &self.body {
            Body::Rreq(_) => TrafficClass::Rreq,
            Body::Rrep(_) => TrafficClass::Rrep,
            Body::Rerr { .. } => TrafficClass::Rerr,
            Body::Data { .. } => TrafficClass::Data,
            Body::PathCheck { .. } => TrafficClass::PathCheck,
            Body::Pba { .. } => TrafficClass::Pba,
            Body::Verdict { .. } => TrafficClass::Verdict,
            Body::Alarm(_) => TrafficClass::Alarm,
        }
    }

    fn bytes(&self, payload: u32) -> u32 {
        let path_bytes = |p: &[NodeId]| 4 * p.len() as u32;
        match &self.body {
            Body::Rreq(c) => 24 + path_bytes(&c.accumulated_path),
            Body::Rrep(c) => 20 + path_bytes(&c.accumulated_path),
            Body::Rerr { .. } => 12,
            Body::Data { .. } => payload + HEADER_BYTES,
            Body::PathCheck { suspect, .. } => HEADER_BYTES + path_bytes(suspect),
            Body::Pba { .. } => HEADER_BYTES,
            Body::Verdict { .. } => HEADER_BYTES + 4,
            Body::Alarm(_) => 12,
        }
    }

    fn header_bits(&self) -> Option<u64> {
        match &self.body {
            Body::Data { header, .. } => header.map(|h| h.pack()),
            Body::PathCheck { header, .. } | Body::Pba { header, .. } => Some(header.pack()),
            _ => None,
        }
    }

    fn route_mut(&mut self) -> Option<&mut Route> {
        match &mut self.body {
            Body::Rerr { route, .. }
            | Body::Data { route, .. }
            | Body::PathCheck { route, .. }
            | Body::Pba { route, .. }
            | Body::Verdict { route, .. } => Some(route),
            _ => None,
        }
    }

    fn forwardable(&self) -> Forwardable {
        match &self.body {
            Body::Data { .. } => Forwardable::Data,
            Body::PathCheck { .. } => Forwardable::PathCheck,
            Body::Pba { .. } => Forwardable::Pba,
            Body::Verdict { .. } => Forwardable::Verdict,
            Body::Rreq(_) => Forwardable::Control(ControlKind::Rreq),
            Body::Rrep(_) => Forwardable::Control(ControlKind::Rrep),
            Body::Rerr { .. } => Forwardable::Control(ControlKind::Rerr),
            Body::Alarm(_) => Forwardable::Control(ControlKind::Alarm),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Timer {
    Discovery { flow: FlowId, broadcast_id: u32 },
    RoundAck { flow: FlowId, round: u32 },
    Verdict { flow: FlowId, check: u64 },
}

#[derive(Debug)]
enum Payload {
    Delivery {
        from: NodeId,
        to: NodeId,
        packet: Packet,
    },
    Timer(Timer),
    Waypoint(NodeId),
    Traffic(FlowId),
}

enum Role {
    Honest,
    BlackHole(BlackHole),
}

struct DestWindow {
    until: SimTime,
    replied_via: HashSet<NodeId>,
}

struct Node {
    role: Role,
    rreq_filter: RreqFilter,
    alarms: AlarmRegistry,
    seq: u32,
    next_broadcast_id: u32,
    windows: HashMap<(NodeId, u32), DestWindow>,
    dest_dht: HashMap<FlowId, DestinationDht>,
}

struct Discovery {
    broadcast_id: u32,
    attempt: u32,
}

struct Selection {
    paths: Vec<SelectedPath>,
    perm: Permutation,
    params: PathSelectionParams,
}

impl Selection {
    fn contains_node(&self, n: NodeId) -> bool {
        self.paths.iter().any(|p| p.entry.path.contains(&n))
    }

    fn uses_link(&self, a: NodeId, b: NodeId) -> bool {
        self.paths.iter().any(|p| p.entry.uses_link(a, b))
    }
}

struct PendingCheck {
    round: u32,
    path_no: u8,
    suspect: Vec<NodeId>,
    attempts: u32,
    timer: Option<crate::engine::EventHandle>,
}

struct RoundInfo {
    opened: SimTime,
    np: u8,
    timeout: SimTime,
    timer: crate::engine::EventHandle,
}

struct Flow {
    id: FlowId,
    src: NodeId,
    dst: NodeId,
    queue: VecDeque<u64>,
    next_seq: u64,
    mrt: RouteTable,
    discovery: Option<Discovery>,
    known_dsn: u32,
    route: Option<MultipathRouteEntry>,
    selection: Option<Selection>,
    fallback: Option<MultipathRouteEntry>,
    dht: SenderDht,
    next_round: u32,
    busy_round: Option<u32>,
    rounds: BTreeMap<u32, RoundInfo>,
    broken_links: Vec<(SimTime, NodeId, NodeId)>,
    checks: BTreeMap<u64, PendingCheck>,
    next_check: u64,
    deferred_checks: Vec<PendingCheck>,
    stats: FlowStats,
}

/// Per-flow results exposed after a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub src: NodeId,
    pub dst: NodeId,
    pub sent: u64,
    pub received: u64,
    /// Every path set the flow switched to, in order.
    pub selections: Vec<Vec<Vec<NodeId>>>,
    /// Per round: `(round, NP, data packets delivered)`.
    pub rounds: BTreeMap<u32, (u8, u8)>,
    /// Rounds opened after the first accusation reached the source.
    pub first_alarm_round: Option<u32>,
}

pub struct RunOutcome {
    pub report: MetricsReport,
    pub flows: Vec<FlowStats>,
    pub per_node_tx: Vec<u64>,
    pub attackers: Vec<NodeId>,
    pub trace: TraceSink,
}

pub struct Simulation {
    scenario: Scenario,
    sched: Scheduler<Payload>,
    topo: Topology,
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    flow_by_pair: HashMap<(NodeId, NodeId), FlowId>,
    attackers: Vec<NodeId>,
    perm_rng: ChaCha8Rng,
    next_packet: u64,
    next_flood: u32,
    collector: MetricsCollector,
    sink: TraceSink,
    io_error: Option<io::Error>,
    per_node_tx: Vec<u64>,
    data_hop: SimTime,
    rreq_window: SimTime,
    discovery_wait: SimTime,
}

impl Simulation {
    pub fn new(scenario: Scenario, sink: TraceSink) -> Result<Self, SimError> {
        let n = scenario.node_count as usize;
        if n < 2 {
            return Err(SimError::Scenario("need at least two nodes".into()));
        }
        if scenario.k_max < 2 {
            return Err(SimError::Scenario("k_max must be at least 2".into()));
        }
        let streams = RngStreams::new(scenario.seed);
        let positions = match &scenario.placement {
            Placement::Random => random_placement(n, scenario.area, &streams),
            Placement::Explicit(p) if p.len() == n => p.clone(),
            Placement::Explicit(p) => {
                return Err(SimError::Scenario(format!(
                    "{} positions for {n} nodes",
                    p.len()
                )))
            }
        };
        let mobility = if scenario.max_speed > 0.0 {
            Mobility::new(
                &positions,
                MobilityParams {
                    area: scenario.area,
                    max_speed: scenario.max_speed,
                    pause: scenario.pause_time,
                },
                &streams,
            )
        } else {
            Mobility::fixed(&positions, scenario.area)
        };
        let mut topo = Topology::new(scenario.radio, scenario.links.clone(), mobility);
        for &(at, a, b) in &scenario.link_failures {
            topo.fail_link(a, b, at);
        }

        let attackers = pick_attackers(&scenario, &streams)?;
        let pairs = pick_flows(&scenario, &attackers, &streams)?;

        let nodes = (0..n as u32)
            .map(|i| {
                let id = NodeId(i);
                let role = if attackers.contains(&id) {
                    Role::BlackHole(BlackHole::new(AttackerProfile::new(id)))
                } else {
                    Role::Honest
                };
                Node {
                    role,
                    rreq_filter: RreqFilter::default(),
                    alarms: AlarmRegistry::default(),
                    seq: 0,
                    next_broadcast_id: 0,
                    windows: HashMap::new(),
                    dest_dht: HashMap::new(),
                }
            })
            .collect();

        let flows: Vec<Flow> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(src, dst))| Flow {
                id: i as FlowId,
                src,
                dst,
                queue: VecDeque::new(),
                next_seq: 0,
                mrt: RouteTable::new(),
                discovery: None,
                known_dsn: 0,
                route: None,
                selection: None,
                fallback: None,
                dht: SenderDht::new(),
                next_round: 0,
                busy_round: None,
                rounds: BTreeMap::new(),
                broken_links: Vec::new(),
                checks: BTreeMap::new(),
                next_check: 0,
                deferred_checks: Vec::new(),
                stats: FlowStats {
                    src,
                    dst,
                    ..FlowStats::default()
                },
            })
            .collect();
        let flow_by_pair = flows.iter().map(|f| ((f.src, f.dst), f.id)).collect();

        let data_hop = scenario.radio.per_hop_latency();
        let diameter = u64::from(scenario.node_count.saturating_sub(1).max(1));
        let rreq_window = data_hop.mul(2 * diameter);
        let discovery_wait = rreq_window + data_hop.mul(diameter);

        let mut sim = Simulation {
            perm_rng: streams.stream("permutation"),
            sched: Scheduler::new(),
            topo,
            nodes,
            flows,
            flow_by_pair,
            attackers,
            next_packet: 0,
            next_flood: 0,
            collector: MetricsCollector::new(),
            sink,
            io_error: None,
            per_node_tx: vec![0; n],
            data_hop,
            rreq_window,
            discovery_wait,
            scenario,
        };
        sim.bootstrap(&streams);
        Ok(sim)
    }

    fn bootstrap(&mut self, streams: &RngStreams) {
        self.emit(TraceRecord::Header {
            scenario_id: self.scenario.id.clone(),
            seed: self.scenario.seed,
            protocol: self.scenario.protocol,
            nodes: self.scenario.node_count,
            payload_bytes: self.scenario.radio.data_payload,
            attackers: self.attackers.clone(),
            sim_time: self.scenario.sim_time,
        });
        let mut jitter = streams.stream("traffic-start");
        for f in 0..self.flows.len() {
            let offset = jitter.gen_range(0..self.scenario.cbr_interval.as_micros().max(1));
            let at = self.scenario.traffic_start + SimTime::from_micros(offset);
            let _ = self
                .sched
                .schedule(at, EventKind::TrafficTick, Payload::Traffic(f as FlowId));
        }
        for i in 0..self.scenario.node_count {
            let node = NodeId(i);
            if let Some(leg) = self.topo.mobility_mut().leg_at(node, 0.0) {
                self.schedule_waypoint(node, leg.pause_until);
            }
        }
    }

    fn schedule_waypoint(&mut self, node: NodeId, at_secs: f64) {
        let at = SimTime::from_micros((at_secs * 1e6).ceil() as u64);
        if at <= self.scenario.sim_time {
            let _ = self
                .sched
                .schedule(at, EventKind::MobilityWaypoint, Payload::Waypoint(node));
        }
    }

    pub fn attackers(&self) -> &[NodeId] {
        &self.attackers
    }

    pub fn flow_endpoints(&self) -> Vec<(NodeId, NodeId)> {
        self.flows.iter().map(|f| (f.src, f.dst)).collect()
    }

    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        let end = self.scenario.sim_time;
        while let Some(ev) = self.sched.pop_until(end) {
            self.dispatch(ev);
        }
        self.sched.advance_to(end);
        let events = self.sched.processed();
        self.emit(TraceRecord::End { t: end, events });
        self.sink.flush()?;
        if let Some(e) = self.io_error.take() {
            return Err(SimError::Io(e));
        }
        let report = self.collector.finish()?;
        Ok(RunOutcome {
            report,
            flows: self.flows.into_iter().map(|f| f.stats).collect(),
            per_node_tx: self.per_node_tx,
            attackers: self.attackers,
            trace: self.sink,
        })
    }

    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn emit(&mut self, rec: TraceRecord) {
        if let TraceRecord::Tx { from, .. } = &rec {
            self.per_node_tx[from.index()] += 1;
        }
        self.collector.observe(&rec);
        if self.sink.is_enabled() {
            if let Err(e) = self.sink.write(&rec) {
                self.io_error.get_or_insert(e);
            }
        }
    }

    fn note(&mut self, counter: Counter) {
        let t = self.now();
        self.emit(TraceRecord::Note { t, counter });
    }

    fn new_packet(&mut self, origin: NodeId, body: Body) -> Packet {
        let id = self.next_packet;
        self.next_packet += 1;
        Packet { id, origin, body }
    }

    fn dispatch(&mut self, ev: SimEvent<Payload>) {
        let t = ev.fire_at;
        let (node, from, packet) = match &ev.payload {
            Payload::Delivery { from, to, packet } => (Some(*to), Some(*from), Some(packet.id)),
            Payload::Timer(Timer::Discovery { flow, .. })
            | Payload::Timer(Timer::RoundAck { flow, .. })
            | Payload::Timer(Timer::Verdict { flow, .. })
            | Payload::Traffic(flow) => (Some(self.flows[*flow as usize].src), None, None),
            Payload::Waypoint(n) => (Some(*n), None, None),
        };
        self.emit(TraceRecord::Event {
            t,
            seq: ev.seq,
            kind: ev.kind,
            node,
            from,
            packet,
        });
        match ev.payload {
            Payload::Delivery { from, to, packet } => self.on_delivery(from, to, packet),
            Payload::Timer(timer) => self.on_timer(timer),
            Payload::Waypoint(node) => {
                let now = self.now().as_secs_f64();
                if let Some(leg) = self.topo.mobility_mut().leg_at(node, now) {
                    self.schedule_waypoint(node, leg.pause_until);
                }
            }
            Payload::Traffic(flow) => self.on_traffic(flow),
        }
    }

    // ---- transmission -------------------------------------------------

    fn broadcast(&mut self, from: NodeId, packet: Packet) {
        let t = self.now();
        self.emit(TraceRecord::Tx {
            t,
            class: packet.class(),
            from,
            to: None,
            packet: packet.id,
            relay: packet.origin != from,
            hdr: packet.header_bits(),
        });
        let bytes = packet.bytes(self.scenario.radio.data_payload);
        for to in self.topo.neighbors_of(from, t) {
            self.topo.deliver(
                &mut self.sched,
                from,
                to,
                bytes,
                Payload::Delivery {
                    from,
                    to,
                    packet: packet.clone(),
                },
            );
        }
    }

    /// Single-hop unicast; returns false on a link drop.
    fn unicast(&mut self, from: NodeId, to: NodeId, packet: Packet) -> bool {
        let t = self.now();
        let class = packet.class();
        let id = packet.id;
        let relay = packet.origin != from;
        let hdr = packet.header_bits();
        let bytes = packet.bytes(self.scenario.radio.data_payload);
        match self.topo.deliver(
            &mut self.sched,
            from,
            to,
            bytes,
            Payload::Delivery { from, to, packet },
        ) {
            HopOutcome::Scheduled { .. } => {
                self.emit(TraceRecord::Tx {
                    t,
                    class,
                    from,
                    to: Some(to),
                    packet: id,
                    relay,
                    hdr,
                });
                true
            }
            HopOutcome::LinkDrop => {
                self.emit(TraceRecord::LinkDrop {
                    t,
                    class,
                    from,
                    to,
                    packet: id,
                });
                false
            }
        }
    }

    /// Sends a source-routed packet one hop further from `at`.
    fn forward_routed(&mut self, at: NodeId, mut packet: Packet) {
        let route = packet.route_mut().expect("source-routed packet");
        let Some(next) = route.next() else {
            return;
        };
        route.at += 1;
        let hops_before: Vec<NodeId> = route.hops[..route.at].to_vec();
        let flow = match &packet.body {
            Body::Data { flow, .. } | Body::PathCheck { flow, .. } => Some(*flow),
            _ => None,
        };
        if !self.unicast(at, next, packet) {
            if let Some(flow) = flow {
                self.report_broken_link(flow, at, next, hops_before);
            }
        }
    }

    fn report_broken_link(&mut self, flow: FlowId, at: NodeId, next: NodeId, prefix: Vec<NodeId>) {
        let src = self.flows[flow as usize].src;
        if at == src {
            self.on_rerr(flow, at, next);
            return;
        }
        let back: Vec<NodeId> = prefix.into_iter().rev().collect();
        let body = Body::Rerr {
            flow,
            ctrl: ControlPacket::rerr(at, next, src),
            route: Route::new(back),
        };
        let pkt = self.new_packet(at, body);
        self.forward_routed(at, pkt);
    }

    // ---- reception ----------------------------------------------------

    fn on_delivery(&mut self, from: NodeId, to: NodeId, mut packet: Packet) {
        if let Role::BlackHole(_) = self.nodes[to.index()].role {
            self.attacker_receive(from, to, packet);
            return;
        }
        if self.nodes[to.index()].alarms.is_blacklisted(from) {
            return;
        }
        match packet.body {
            Body::Rreq(rreq) => self.on_rreq(to, from, rreq),
            Body::Rrep(rrep) => self.on_rrep(to, packet.id, packet.origin, rrep),
            Body::Alarm(alarm) => self.on_alarm(to, alarm, packet.id),
            _ => {
                let done = packet.route_mut().map(|r| r.at_end()).unwrap_or(true);
                if done {
                    self.consume(to, packet);
                } else {
                    self.forward_routed(to, packet);
                }
            }
        }
    }

    fn attacker_receive(&mut self, from: NodeId, at: NodeId, packet: Packet) {
        let class = packet.class();
        let what = packet.forwardable();
        let t = self.now();
        let node = &mut self.nodes[at.index()];
        let Role::BlackHole(bh) = &mut node.role else {
            unreachable!()
        };
        let action = match &packet.body {
            Body::Rreq(rreq) => {
                if !node.rreq_filter.first_sighting(rreq.origin, rreq.broadcast_id) {
                    return;
                }
                bh.on_receive(what, Some(rreq))
            }
            Body::Rrep(rrep) => bh.on_receive(what, Some(rrep)),
            _ => bh.on_receive(what, None),
        };
        match action {
            AttackerAction::Forge(rrep) => {
                let pkt = self.new_packet(at, Body::Rrep(rrep));
                self.unicast(at, from, pkt);
            }
            AttackerAction::Drop => self.emit(TraceRecord::MaliciousDrop {
                t,
                class,
                node: at,
                packet: packet.id,
            }),
            AttackerAction::Ignore => {}
        }
    }

    fn on_rreq(&mut self, at: NodeId, from: NodeId, rreq: ControlPacket) {
        let now = self.now();
        let node = &mut self.nodes[at.index()];
        if node.alarms.any_blacklisted(&rreq.accumulated_path) {
            return;
        }
        if at == rreq.destination {
            let key = (rreq.origin, rreq.broadcast_id);
            if !node.windows.contains_key(&key) {
                node.seq = node.seq.max(rreq.dest_seq) + 1;
                node.windows.insert(
                    key,
                    DestWindow {
                        until: now + self.rreq_window,
                        replied_via: HashSet::new(),
                    },
                );
            }
            let seq = node.seq;
            let w = node.windows.get_mut(&key).expect("inserted");
            if now > w.until || !w.replied_via.insert(from) {
                return;
            }
            if let RreqAction::Reply(rrep) = handle_rreq(at, &rreq, seq) {
                let pkt = self.new_packet(at, Body::Rrep(rrep));
                self.unicast(at, from, pkt);
            }
            return;
        }
        if !node.rreq_filter.first_sighting(rreq.origin, rreq.broadcast_id) {
            return;
        }
        if let RreqAction::Forward(fwd) = handle_rreq(at, &rreq, node.seq) {
            let pkt = Packet {
                id: self.next_packet,
                origin: rreq.origin,
                body: Body::Rreq(fwd),
            };
            self.next_packet += 1;
            self.broadcast(at, pkt);
        }
    }

    fn on_rrep(&mut self, at: NodeId, id: u64, origin: NodeId, rrep: ControlPacket) {
        if self.nodes[at.index()]
            .alarms
            .any_blacklisted(&rrep.accumulated_path)
        {
            return;
        }
        if at == rrep.origin {
            if let Some(&flow) = self.flow_by_pair.get(&(rrep.origin, rrep.destination)) {
                self.source_rrep(flow, rrep);
            }
            return;
        }
        if let Some(prev) = rrep.reverse_next_hop(at) {
            let pkt = Packet {
                id,
                origin,
                body: Body::Rrep(rrep),
            };
            self.unicast(at, prev, pkt);
        }
    }

    fn on_alarm(&mut self, at: NodeId, alarm: AlarmPacket, id: u64) {
        match self.nodes[at.index()].alarms.handle_alarm(&alarm) {
            AlarmAction::Duplicate => {}
            AlarmAction::Accepted { rebroadcast } => {
                self.apply_blacklist(at, alarm.accused);
                if let Some(next) = rebroadcast {
                    let pkt = Packet {
                        id,
                        origin: alarm.reporter,
                        body: Body::Alarm(next),
                    };
                    self.broadcast(at, pkt);
                }
            }
        }
    }

    fn consume(&mut self, at: NodeId, packet: Packet) {
        match packet.body {
            Body::Data {
                flow,
                seq,
                header,
                route,
            } => self.dest_data(at, flow, seq, header, route.hops),
            Body::PathCheck {
                flow,
                check,
                header,
                suspect,
                route,
            } => self.dest_path_check(at, flow, check, header, suspect, route.hops),
            Body::Pba { flow, header, .. } => self.source_pba(flow, header),
            Body::Verdict {
                flow,
                check,
                verdict,
                ..
            } => self.source_verdict(flow, check, verdict),
            Body::Rerr { flow, ctrl, .. } => {
                if let Some((a, b)) = ctrl.broken_link() {
                    self.on_rerr(flow, a, b);
                }
            }
            Body::Rreq(_) | Body::Rrep(_) | Body::Alarm(_) => {}
        }
    }

    // ---- destination side ---------------------------------------------

    fn dest_data(
        &mut self,
        at: NodeId,
        flow: FlowId,
        seq: u64,
        header: Option<PBAckHeader>,
        path: Vec<NodeId>,
    ) {
        let t = self.now();
        let dispatches = match header {
            Some(h) => {
                let dht = self.nodes[at.index()].dest_dht.entry(flow).or_default();
                match dht.process_data(&h, &path) {
                    Ok(d) => {
                        let stats = &mut self.flows[flow as usize].stats;
                        if let Some(r) = stats.rounds.get_mut(&h.round) {
                            r.1 += 1;
                        }
                        d
                    }
                    Err(_) => {
                        self.note(Counter::DuplicateData);
                        return;
                    }
                }
            }
            None => Vec::new(),
        };
        self.flows[flow as usize].stats.received += 1;
        self.emit(TraceRecord::AppRecv { t, flow, seq });
        let np = header.map(|h| h.path_count).unwrap_or(1);
        for d in dispatches {
            let body = Body::Pba {
                flow,
                header: PBAckHeader {
                    round: d.round,
                    path_no: d.path_no,
                    ack_path_no: d.ack_path_no,
                    path_count: np,
                    message: MessageType::Data,
                },
                route: Route::new(d.route),
            };
            let pkt = self.new_packet(at, body);
            self.forward_routed(at, pkt);
        }
    }

    fn dest_path_check(
        &mut self,
        at: NodeId,
        flow: FlowId,
        check: u64,
        header: PBAckHeader,
        suspect: Vec<NodeId>,
        carrier: Vec<NodeId>,
    ) {
        let now = self.now();
        let neighbors = self.topo.neighbors_of(at, now);
        let Ok(verdict) = check_suspect_path(at, &neighbors, &suspect) else {
            return;
        };
        match verdict {
            Verdict::Alarm { accused } => {
                self.emit(TraceRecord::Alarm {
                    t: now,
                    reporter: at,
                    accused,
                });
                let alarm = AlarmPacket {
                    accused,
                    reporter: at,
                    flood_id: self.next_flood,
                    ttl: self.scenario.node_count,
                };
                self.next_flood += 1;
                self.nodes[at.index()].alarms.handle_alarm(&alarm);
                let pkt = self.new_packet(at, Body::Alarm(alarm));
                self.broadcast(at, pkt);
            }
            Verdict::PathOk => {
                if let Some(dht) = self.nodes[at.index()].dest_dht.get_mut(&flow) {
                    dht.mark_path_good(&suspect);
                }
            }
        }
        let _ = header;
        let back: Vec<NodeId> = carrier.into_iter().rev().collect();
        let body = Body::Verdict {
            flow,
            check,
            verdict,
            route: Route::new(back),
        };
        let pkt = self.new_packet(at, body);
        self.forward_routed(at, pkt);
    }

    // ---- source side --------------------------------------------------

    fn on_traffic(&mut self, flow: FlowId) {
        let t = self.now();
        let interval = self.scenario.cbr_interval;
        let f = &mut self.flows[flow as usize];
        let seq = f.next_seq;
        f.next_seq += 1;
        f.stats.sent += 1;
        let overflow = f.queue.len() >= self.scenario.queue_limit;
        if !overflow {
            f.queue.push_back(seq);
        }
        self.emit(TraceRecord::AppSend { t, flow, seq });
        if overflow {
            self.note(Counter::QueueOverflow);
        }
        let next = t + interval;
        if next < self.scenario.traffic_stop && next <= self.scenario.sim_time {
            let _ = self
                .sched
                .schedule(next, EventKind::TrafficTick, Payload::Traffic(flow));
        }
        self.pump(flow);
    }

    fn pump(&mut self, flow: FlowId) {
        match self.scenario.protocol {
            Protocol::Aodv => {
                let f = &self.flows[flow as usize];
                match &f.route {
                    Some(route) => {
                        let path = route.path.clone();
                        self.send_queued_single(flow, path);
                    }
                    None if !f.queue.is_empty() => self.ensure_discovery(flow),
                    None => {}
                }
            }
            Protocol::Aomsr => {
                if self.flows[flow as usize].selection.is_none()
                    && self.flows[flow as usize].fallback.is_none()
                {
                    if self.flows[flow as usize].discovery.is_some() {
                        return;
                    }
                    if !self.flows[flow as usize].mrt.is_empty() {
                        self.try_select(flow);
                    }
                }
                let f = &self.flows[flow as usize];
                if let Some(sel) = &f.selection {
                    let np = sel.paths.len();
                    loop {
                        let f = &self.flows[flow as usize];
                        let free = f.busy_round.is_none_or(|r| f.dht.all_free(r));
                        if !free || f.queue.len() < np || f.selection.is_none() {
                            break;
                        }
                        self.dispatch_round(flow);
                    }
                } else if let Some(fb) = &f.fallback {
                    let path = fb.path.clone();
                    self.send_queued_single(flow, path);
                } else if !f.queue.is_empty() {
                    self.ensure_discovery(flow);
                }
            }
        }
    }

    fn send_queued_single(&mut self, flow: FlowId, path: Vec<NodeId>) {
        let src = self.flows[flow as usize].src;
        while let Some(seq) = self.flows[flow as usize].queue.pop_front() {
            let body = Body::Data {
                flow,
                seq,
                header: None,
                route: Route::new(path.clone()),
            };
            let pkt = self.new_packet(src, body);
            self.forward_routed(src, pkt);
            // A first-hop failure clears the route; stop and rediscover.
            let f = &self.flows[flow as usize];
            if f.route.is_none() && f.fallback.is_none() {
                break;
            }
        }
    }

    fn ensure_discovery(&mut self, flow: FlowId) {
        if self.flows[flow as usize].discovery.is_none() {
            self.start_discovery(flow, 0);
        }
    }

    fn start_discovery(&mut self, flow: FlowId, attempt: u32) {
        let f = &mut self.flows[flow as usize];
        let (src, dst, dsn) = (f.src, f.dst, f.known_dsn);
        f.mrt.clear();
        let node = &mut self.nodes[src.index()];
        let bid = node.next_broadcast_id;
        node.next_broadcast_id += 1;
        node.rreq_filter.first_sighting(src, bid);
        self.flows[flow as usize].discovery = Some(Discovery {
            broadcast_id: bid,
            attempt,
        });
        let pkt = self.new_packet(src, Body::Rreq(ControlPacket::rreq(src, dst, bid, dsn)));
        self.broadcast(src, pkt);
        self.sched.schedule_in(
            self.discovery_wait,
            EventKind::TimerExpiry,
            Payload::Timer(Timer::Discovery {
                flow,
                broadcast_id: bid,
            }),
        );
    }

    fn source_rrep(&mut self, flow: FlowId, rrep: ControlPacket) {
        let entry = MultipathRouteEntry::from_rrep(&rrep, self.data_hop);
        let f = &mut self.flows[flow as usize];
        f.known_dsn = f.known_dsn.max(rrep.dest_seq);
        if !f.mrt.insert(entry.clone()) {
            return;
        }
        if self.scenario.protocol == Protocol::Aodv {
            let better = f.route.as_ref().is_none_or(|cur| aodv_prefers(&entry, cur));
            if better {
                f.stats.selections.push(vec![entry.path.clone()]);
                let t = self.now();
                let paths = vec![entry.path.clone()];
                self.flows[flow as usize].route = Some(entry);
                self.emit(TraceRecord::Selection { t, flow, paths });
                self.pump(flow);
            }
        }
    }

    fn on_discovery_timer(&mut self, flow: FlowId, broadcast_id: u32) {
        let f = &mut self.flows[flow as usize];
        let Some(d) = f.discovery.as_ref().filter(|d| d.broadcast_id == broadcast_id) else {
            return;
        };
        let attempt = d.attempt;
        f.discovery = None;
        let have_route = match self.scenario.protocol {
            Protocol::Aodv => f.route.is_some(),
            Protocol::Aomsr => !f.mrt.is_empty(),
        };
        if !have_route {
            if attempt < self.scenario.rreq_retries {
                self.start_discovery(flow, attempt + 1);
            } else {
                let f = &mut self.flows[flow as usize];
                f.queue.clear();
                let stale: Vec<PendingCheck> = f.deferred_checks.drain(..).collect();
                self.note(Counter::NoRoute);
                for _ in stale {
                    self.note(Counter::DetectionAbandoned);
                }
            }
            return;
        }
        if self.scenario.protocol == Protocol::Aomsr {
            self.try_select(flow);
            self.run_deferred_checks(flow);
        }
        self.pump(flow);
    }

    fn try_select(&mut self, flow: FlowId) {
        let src = self.flows[flow as usize].src;
        let blacklisted: Vec<NodeId> = self.nodes[src.index()].alarms.blacklisted().copied().collect();
        let t = self.now();
        let f = &mut self.flows[flow as usize];
        for b in blacklisted {
            f.mrt.purge_node(b);
        }
        f.selection = None;
        f.fallback = None;
        f.busy_round = None;
        let Some(t_min) = f.mrt.entries().iter().map(|e| e.est_delay).min() else {
            return;
        };
        let mut params =
            PathSelectionParams::new(t_min, self.scenario.delta, self.scenario.k_max, self.data_hop);
        if let AckTimeout::Seconds(s) = self.scenario.ack_timeout {
            params.ack_timeout = SimTime::from_secs_f64(s);
        }
        params.allow_overlap = self.scenario.allow_overlap;
        match select_multipaths(f.mrt.entries(), &params) {
            Ok(paths) => {
                let perm =
                    generate_permutation(paths.len(), self.scenario.permutation, &mut self.perm_rng)
                        .expect("at least two paths");
                let listing: Vec<Vec<NodeId>> = paths.iter().map(|p| p.entry.path.clone()).collect();
                let f = &mut self.flows[flow as usize];
                f.stats.selections.push(listing.clone());
                f.selection = Some(Selection {
                    paths,
                    perm,
                    params,
                });
                self.emit(TraceRecord::Selection {
                    t,
                    flow,
                    paths: listing,
                });
            }
            Err(SelectionError::InsufficientPaths { .. }) => {
                let best = f
                    .mrt
                    .entries()
                    .iter()
                    .min_by(|a, b| (a.est_delay, &a.path).cmp(&(b.est_delay, &b.path)))
                    .cloned()
                    .expect("non-empty table");
                f.stats.selections.push(vec![best.path.clone()]);
                let paths = vec![best.path.clone()];
                f.fallback = Some(best);
                self.note(Counter::InsufficientPaths);
                self.emit(TraceRecord::Selection { t, flow, paths });
            }
            Err(SelectionError::EmptyTable) => {}
        }
    }

    fn dispatch_round(&mut self, flow: FlowId) {
        let t = self.now();
        let f = &mut self.flows[flow as usize];
        let sel = f.selection.as_ref().expect("selection present");
        let round = f.next_round;
        f.next_round += 1;
        let headers = f
            .dht
            .open_round(round, &sel.paths, &sel.perm)
            .expect("fresh round id");
        let np = headers.len() as u8;
        let timeout = sel.params.ack_timeout;
        let routes: Vec<Vec<NodeId>> = sel.paths.iter().map(|p| p.entry.path.clone()).collect();
        let seqs: Vec<u64> = (0..np).filter_map(|_| f.queue.pop_front()).collect();
        let src = f.src;
        f.busy_round = Some(round);
        f.stats.rounds.insert(round, (np, 0));
        let timer = self.sched.schedule_in(
            timeout,
            EventKind::TimerExpiry,
            Payload::Timer(Timer::RoundAck { flow, round }),
        );
        self.flows[flow as usize].rounds.insert(
            round,
            RoundInfo {
                opened: t,
                np,
                timeout,
                timer,
            },
        );
        self.emit(TraceRecord::RoundOpen { t, flow, round, np });
        for ((h, route), seq) in headers.into_iter().zip(routes).zip(seqs) {
            let body = Body::Data {
                flow,
                seq,
                header: Some(h),
                route: Route::new(route),
            };
            let pkt = self.new_packet(src, body);
            self.forward_routed(src, pkt);
        }
    }

    fn source_pba(&mut self, flow: FlowId, h: PBAckHeader) {
        let f = &mut self.flows[flow as usize];
        match f.dht.receive_pba(h.round, h.path_no, h.ack_path_no) {
            PbaOutcome::Stale => self.note(Counter::StalePba),
            PbaOutcome::Duplicate => {}
            PbaOutcome::Credited { round_complete } => {
                if round_complete {
                    if let Some(info) = f.rounds.remove(&h.round) {
                        self.sched.cancel(info.timer);
                    }
                    if f.busy_round == Some(h.round) {
                        f.busy_round = None;
                    }
                    f.dht.prune_before(h.round.saturating_sub(64));
                }
                self.pump(flow);
            }
        }
    }

    fn on_round_timeout(&mut self, flow: FlowId, round: u32) {
        let t = self.now();
        let f = &mut self.flows[flow as usize];
        let Some(info) = f.rounds.remove(&round) else {
            return;
        };
        let Some(suspects) = f.dht.timeout(round) else {
            return;
        };
        if f.busy_round == Some(round) {
            f.busy_round = None;
        }
        let src = f.src;
        let np = info.np;
        let _ = info.timeout;
        for s in suspects {
            self.emit(TraceRecord::Suspect {
                t,
                flow,
                round,
                path_no: s.path_no,
                path: s.path.clone(),
            });
            let f = &self.flows[flow as usize];
            let broken = f
                .broken_links
                .iter()
                .any(|&(when, a, b)| when >= info.opened && path_uses_link(&s.path, a, b));
            let already = f.checks.values().any(|c| c.suspect == s.path)
                || f.deferred_checks.iter().any(|c| c.suspect == s.path);
            if broken || already || self.nodes[src.index()].alarms.any_blacklisted(&s.path) {
                continue;
            }
            let check = PendingCheck {
                round,
                path_no: s.path_no,
                suspect: s.path,
                attempts: 0,
                timer: None,
            };
            self.send_path_check(flow, check, np);
        }
        self.pump(flow);
    }

    fn usable_carrier(&self, flow: FlowId, check: &PendingCheck) -> Option<(u8, Vec<NodeId>)> {
        let f = &self.flows[flow as usize];
        let since = SimTime::ZERO;
        let ok = |path: &[NodeId]| {
            !f.broken_links
                .iter()
                .any(|&(when, a, b)| when >= since && path_uses_link(path, a, b))
        };
        f.dht
            .entries(check.round)
            .filter(|e| e.path_good && e.path != check.suspect && ok(&e.path))
            .min_by_key(|e| (e.path.len(), e.path_no))
            .map(|e| (e.path_no, e.path.clone()))
    }

    fn send_path_check(&mut self, flow: FlowId, mut check: PendingCheck, np: u8) {
        match self.usable_carrier(flow, &check) {
            Some((carrier_no, carrier)) => self.transmit_check(flow, check, carrier_no, carrier, np),
            None if check.attempts == 0 => {
                // No confirmed path left: rediscover and retry once.
                check.attempts += 1;
                let f = &mut self.flows[flow as usize];
                f.deferred_checks.push(check);
                f.selection = None;
                f.fallback = None;
                f.busy_round = None;
                self.ensure_discovery(flow);
            }
            None => self.note(Counter::DetectionAbandoned),
        }
    }

    fn run_deferred_checks(&mut self, flow: FlowId) {
        let pending: Vec<PendingCheck> = self.flows[flow as usize].deferred_checks.drain(..).collect();
        for check in pending {
            let interior: HashSet<NodeId> = interior_of(&check.suspect).iter().copied().collect();
            let carrier = self.flows[flow as usize]
                .mrt
                .entries()
                .iter()
                .filter(|e| e.path != check.suspect && !e.interior().iter().any(|n| interior.contains(n)))
                .min_by(|a, b| (a.est_delay, &a.path).cmp(&(b.est_delay, &b.path)))
                .map(|e| e.path.clone());
            match carrier {
                Some(path) => {
                    let np = self.flows[flow as usize]
                        .selection
                        .as_ref()
                        .map(|s| s.paths.len() as u8)
                        .unwrap_or(1);
                    self.transmit_check(flow, check, 1, path, np.max(1));
                }
                None => self.note(Counter::DetectionAbandoned),
            }
        }
    }

    fn transmit_check(
        &mut self,
        flow: FlowId,
        mut check: PendingCheck,
        carrier_no: u8,
        carrier: Vec<NodeId>,
        np: u8,
    ) {
        let f = &mut self.flows[flow as usize];
        let id = f.next_check;
        f.next_check += 1;
        let src = f.src;
        let timeout = f
            .selection
            .as_ref()
            .map(|s| s.params.ack_timeout)
            .unwrap_or_else(|| self.data_hop.mul(4 * u64::from(self.scenario.node_count)));
        let header = PBAckHeader {
            round: check.round,
            path_no: check.path_no,
            ack_path_no: carrier_no,
            path_count: np.max(check.path_no).max(carrier_no),
            message: MessageType::PathCheck,
        };
        let body = Body::PathCheck {
            flow,
            check: id,
            header,
            suspect: check.suspect.clone(),
            route: Route::new(carrier),
        };
        check.timer = Some(self.sched.schedule_in(
            timeout,
            EventKind::TimerExpiry,
            Payload::Timer(Timer::Verdict { flow, check: id }),
        ));
        self.flows[flow as usize].checks.insert(id, check);
        let pkt = self.new_packet(src, body);
        self.forward_routed(src, pkt);
    }

    fn on_verdict_timeout(&mut self, flow: FlowId, id: u64) {
        let Some(mut check) = self.flows[flow as usize].checks.remove(&id) else {
            return;
        };
        check.timer = None;
        if check.attempts >= 1 {
            self.note(Counter::DetectionAbandoned);
            return;
        }
        check.attempts += 1;
        let np = self.flows[flow as usize]
            .selection
            .as_ref()
            .map(|s| s.paths.len() as u8)
            .unwrap_or(1);
        match self.usable_carrier(flow, &check) {
            Some((no, carrier)) => self.transmit_check(flow, check, no, carrier, np),
            None => self.note(Counter::DetectionAbandoned),
        }
    }

    fn source_verdict(&mut self, flow: FlowId, id: u64, verdict: Verdict) {
        let Some(check) = self.flows[flow as usize].checks.remove(&id) else {
            return;
        };
        if let Some(timer) = check.timer {
            self.sched.cancel(timer);
        }
        match verdict {
            Verdict::Alarm { accused } => {
                let src = self.flows[flow as usize].src;
                self.nodes[src.index()].alarms.blacklist(accused);
                self.apply_blacklist(src, accused);
            }
            Verdict::PathOk => {
                self.flows[flow as usize]
                    .dht
                    .mark_good(check.round, check.path_no);
            }
        }
    }

    /// Purges routes through `accused` for every flow sourced at `node`.
    fn apply_blacklist(&mut self, node: NodeId, accused: NodeId) {
        let ids: Vec<FlowId> = self
            .flows
            .iter()
            .filter(|f| f.src == node)
            .map(|f| f.id)
            .collect();
        for flow in ids {
            let f = &mut self.flows[flow as usize];
            f.mrt.purge_node(accused);
            if f.stats.first_alarm_round.is_none() {
                f.stats.first_alarm_round = Some(f.next_round);
            }
            let affected = f.selection.as_ref().is_some_and(|s| s.contains_node(accused))
                || f.fallback.as_ref().is_some_and(|e| e.path.contains(&accused))
                || f.route.as_ref().is_some_and(|e| e.path.contains(&accused));
            if affected {
                f.route = None;
                f.selection = None;
                f.fallback = None;
                f.busy_round = None;
                if f.discovery.is_none() && !f.mrt.is_empty() {
                    self.try_select(flow);
                }
                self.pump(flow);
            }
        }
    }

    fn on_rerr(&mut self, flow: FlowId, a: NodeId, b: NodeId) {
        let t = self.now();
        let f = &mut self.flows[flow as usize];
        f.broken_links.push((t, a, b));
        if f.broken_links.len() > 256 {
            f.broken_links.drain(..128);
        }
        f.mrt.purge_link(a, b);
        let affected = f.route.as_ref().is_some_and(|e| e.uses_link(a, b))
            || f.fallback.as_ref().is_some_and(|e| e.uses_link(a, b))
            || f.selection.as_ref().is_some_and(|s| s.uses_link(a, b));
        if affected {
            f.route = None;
            f.selection = None;
            f.fallback = None;
            f.busy_round = None;
            if self.scenario.protocol == Protocol::Aodv {
                f.mrt.clear();
            }
            self.pump(flow);
        }
    }

    fn on_timer(&mut self, timer: Timer) {
        match timer {
            Timer::Discovery {
                flow,
                broadcast_id,
            } => self.on_discovery_timer(flow, broadcast_id),
            Timer::RoundAck { flow, round } => self.on_round_timeout(flow, round),
            Timer::Verdict { flow, check } => self.on_verdict_timeout(flow, check),
        }
    }
}

fn interior_of(path: &[NodeId]) -> &[NodeId] {
    if path.len() <= 2 {
        &[]
    } else {
        &path[1..path.len() - 1]
    }
}

fn path_uses_link(path: &[NodeId], a: NodeId, b: NodeId) -> bool {
    path.windows(2)
        .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
}

fn pick_attackers(scenario: &Scenario, streams: &RngStreams) -> Result<Vec<NodeId>, SimError> {
    let n = scenario.node_count;
    let mut ids = match &scenario.attackers {
        Attackers::Explicit(ids) => {
            if let Some(bad) = ids.iter().find(|id| id.0 >= n) {
                return Err(SimError::Scenario(format!("attacker {bad} out of range")));
            }
            ids.clone()
        }
        Attackers::Count(c) => {
            if *c + 2 > n {
                return Err(SimError::Scenario("too many attackers".into()));
            }
            let reserved: HashSet<NodeId> = match &scenario.flows {
                FlowSpec::Explicit(pairs) => pairs.iter().flat_map(|&(a, b)| [a, b]).collect(),
                FlowSpec::Random { .. } => HashSet::new(),
            };
            let mut pool: Vec<NodeId> = (0..n).map(NodeId).filter(|id| !reserved.contains(id)).collect();
            let mut rng = streams.stream("attackers");
            pool.shuffle(&mut rng);
            pool.truncate(*c as usize);
            pool
        }
    };
    ids.sort();
    Ok(ids)
}

fn pick_flows(
    scenario: &Scenario,
    attackers: &[NodeId],
    streams: &RngStreams,
) -> Result<Vec<(NodeId, NodeId)>, SimError> {
    match &scenario.flows {
        FlowSpec::Explicit(pairs) => {
            for &(a, b) in pairs {
                if a == b || attackers.contains(&a) || attackers.contains(&b) {
                    return Err(SimError::Scenario(format!("invalid flow {a}->{b}")));
                }
            }
            let distinct: HashSet<_> = pairs.iter().collect();
            if distinct.len() != pairs.len() {
                return Err(SimError::Scenario("duplicate flow".into()));
            }
            Ok(pairs.clone())
        }
        FlowSpec::Random { background } => {
            let honest: Vec<NodeId> = (0..scenario.node_count)
                .map(NodeId)
                .filter(|id| !attackers.contains(id))
                .collect();
            if honest.len() < 2 {
                return Err(SimError::Scenario("fewer than two honest nodes".into()));
            }
            let mut rng = streams.stream("traffic");
            let wanted = 1 + *background as usize;
            let max_pairs = honest.len() * (honest.len() - 1);
            let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
            while pairs.len() < wanted.min(max_pairs) {
                let pick: Vec<&NodeId> = honest.choose_multiple(&mut rng, 2).collect();
                let pair = (*pick[0], *pick[1]);
                if !pairs.contains(&pair) {
                    pairs.push(pair);
                }
            }
            Ok(pairs)
        }
    }
}

/// Runs one scenario to completion.
pub fn run_scenario(scenario: Scenario, sink: TraceSink) -> Result<RunOutcome, SimError> {
    Simulation::new(scenario, sink)?.run()
}
