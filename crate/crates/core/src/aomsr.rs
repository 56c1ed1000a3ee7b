//! Multipath secure routing with permutation-based acknowledgement.
//!
//! The sender splits each round of traffic over `NP` vertex-disjoint paths.
//! Packet `i` names a different path, `perm(i)`, on which its acknowledgement
//! must come back; `perm` is a derangement. A black hole on path `j` therefore
//! both loses packet `j` and makes path `j` unusable as an ack carrier, so
//! after the ack timer only path `j`'s entry is left unacknowledged and
//! unconfirmed. The sender then ships that path's node list to the destination
//! over a confirmed path, and the destination checks whether the node claiming
//! a direct link to it is really a neighbour.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::aodv::MultipathRouteEntry;
use crate::engine::SimTime;
use crate::topology::NodeId;

/// Size of the appended header on the wire, in bytes.
pub const HEADER_BYTES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    PathCheck = 0,
    Data = 1,
}

/// Header appended to data, path-check and acknowledgement packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PBAckHeader {
    pub round: u32,
    /// Path the packet travels on (1-based).
    pub path_no: u8,
    /// Path its acknowledgement must travel on (1-based).
    pub ack_path_no: u8,
    pub path_count: u8,
    pub message: MessageType,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeaderError {
    #[error("path number {0} outside 1..={1}")]
    PathOutOfRange(u8, u8),
    #[error("data packet acknowledges on its own path {0}")]
    FixedPoint(u8),
    #[error("packed header has bits above bit 56: {0:#x}")]
    Overflow(u64),
}

impl PBAckHeader {
    /// Packs as `round:u32 | PN:u8 | PAckN:u8 | NP:u8 | ToM:u1`, most
    /// significant first, into the low 57 bits.
    pub fn pack(&self) -> u64 {
        (u64::from(self.round) << 25)
            | (u64::from(self.path_no) << 17)
            | (u64::from(self.ack_path_no) << 9)
            | (u64::from(self.path_count) << 1)
            | self.message as u64
    }

    pub fn unpack(bits: u64) -> Result<Self, HeaderError> {
        if bits >> 57 != 0 {
            return Err(HeaderError::Overflow(bits));
        }
        Ok(PBAckHeader {
            round: (bits >> 25) as u32,
            path_no: (bits >> 17) as u8,
            ack_path_no: (bits >> 9) as u8,
            path_count: (bits >> 1) as u8,
            message: if bits & 1 == 1 {
                MessageType::Data
            } else {
                MessageType::PathCheck
            },
        })
    }

    pub fn validate(&self) -> Result<(), HeaderError> {
        let np = self.path_count;
        for n in [self.path_no, self.ack_path_no] {
            if n == 0 || n > np {
                return Err(HeaderError::PathOutOfRange(n, np));
            }
        }
        if self.message == MessageType::Data && np >= 2 && self.path_no == self.ack_path_no {
            return Err(HeaderError::FixedPoint(self.path_no));
        }
        Ok(())
    }
}

/// One row of a Data Hash Table. `path_good`, `path_free` and `ack_done`
/// are the FGB, FFB and PSR flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhtEntry {
    pub round: u32,
    pub path_no: u8,
    pub ack_path_no: u8,
    pub path: Vec<NodeId>,
    pub path_good: bool,
    pub path_free: bool,
    pub ack_done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSelectionParams {
    /// Estimated delay of the fastest known path.
    pub t_min: SimTime,
    /// Extra delay tolerated beyond `t_min`.
    pub delta: SimTime,
    pub k_max: usize,
    pub ack_timeout: SimTime,
    /// Skip the vertex-disjointness filter (negative experiments only).
    pub allow_overlap: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("k_max must be at least 2, got {0}")]
    KMax(usize),
    #[error("ack_timeout {timeout} must exceed twice the delay budget {budget}")]
    Timeout { timeout: SimTime, budget: SimTime },
}

/// Default ack timer: twice the delay budget plus four data hops of slack.
pub fn auto_ack_timeout(t_min: SimTime, delta: SimTime, per_hop: SimTime) -> SimTime {
    (t_min + delta).mul(2) + per_hop.mul(4)
}

impl PathSelectionParams {
    pub fn new(t_min: SimTime, delta: SimTime, k_max: usize, per_hop: SimTime) -> Self {
        PathSelectionParams {
            t_min,
            delta,
            k_max,
            ack_timeout: auto_ack_timeout(t_min, delta, per_hop),
            allow_overlap: false,
        }
    }

    pub fn budget(&self) -> SimTime {
        self.t_min + self.delta
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.k_max < 2 {
            return Err(ParamsError::KMax(self.k_max));
        }
        if self.ack_timeout <= self.budget().mul(2) {
            return Err(ParamsError::Timeout {
                timeout: self.ack_timeout,
                budget: self.budget(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedPath {
    pub number: u8,
    pub entry: MultipathRouteEntry,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("routing table is empty")]
    EmptyTable,
    #[error("only {found} usable path(s) within the delay budget")]
    InsufficientPaths { found: usize },
}

/// Keeps paths whose estimated delay is within `t_min + delta`, then picks
/// greedily by ascending delay (ties: lexicographic node sequence), skipping
/// any path that shares an interior node with one already picked. Picked
/// paths are numbered 1..=NP in pick order.
pub fn select_multipaths(
    mrt: &[MultipathRouteEntry],
    params: &PathSelectionParams,
) -> Result<Vec<SelectedPath>, SelectionError> {
    if mrt.is_empty() {
        return Err(SelectionError::EmptyTable);
    }
    let budget = params.budget();
    let mut candidates: Vec<&MultipathRouteEntry> =
        mrt.iter().filter(|e| e.est_delay <= budget).collect();
    candidates.sort_by(|a, b| (a.est_delay, &a.path).cmp(&(b.est_delay, &b.path)));

    let mut used: HashSet<NodeId> = HashSet::new();
    let mut picked: Vec<SelectedPath> = Vec::new();
    for cand in candidates {
        if picked.len() == params.k_max {
            break;
        }
        if picked.iter().any(|p| p.entry.path == cand.path) {
            continue;
        }
        if !params.allow_overlap && cand.interior().iter().any(|n| used.contains(n)) {
            continue;
        }
        used.extend(cand.interior().iter().copied());
        picked.push(SelectedPath {
            number: picked.len() as u8 + 1,
            entry: cand.clone(),
        });
    }
    if picked.len() < 2 {
        return Err(SelectionError::InsufficientPaths {
            found: picked.len(),
        });
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermutationPolicy {
    /// `perm(i) = ((i - 2) mod NP) + 1`: 1->NP, 2->1, 3->2, ...
    #[default]
    BackwardShift,
    /// Uniform over derangements, by rejection sampling.
    RandomDerangement,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("no derangement exists for {0} path(s)")]
    NoDerangement(usize),
    #[error("{0:?} is not a derangement of 1..=n")]
    NotDerangement(Vec<u8>),
}

/// Maps a 1-based path number to the 1-based path carrying its ack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<u8>);

impl TryFrom<Vec<u8>> for Permutation {
    type Error = PermutationError;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        let p = Permutation(v);
        if p.len() >= 2 && p.is_bijection() && p.is_derangement() {
            Ok(p)
        } else {
            Err(PermutationError::NotDerangement(p.0))
        }
    }
}

impl Permutation {
    pub fn ack_path(&self, path_no: u8) -> u8 {
        self.0[usize::from(path_no) - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn is_derangement(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| usize::from(p) != i + 1)
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.0.len();
        let set: BTreeSet<u8> = self.0.iter().copied().collect();
        set.len() == n && set.iter().all(|&p| p >= 1 && usize::from(p) <= n)
    }
}

pub fn generate_permutation<R: Rng + ?Sized>(
    np: usize,
    policy: PermutationPolicy,
    rng: &mut R,
) -> Result<Permutation, PermutationError> {
    if np <= 1 || np > usize::from(u8::MAX) {
        return Err(PermutationError::NoDerangement(np));
    }
    let perm = match policy {
        PermutationPolicy::BackwardShift => (1..=np).map(|i| ((i + np - 2) % np + 1) as u8).collect(),
        PermutationPolicy::RandomDerangement => {
            let mut v: Vec<u8> = (1..=np as u8).collect();
            loop {
                v.shuffle(rng);
                if v.iter().enumerate().all(|(i, &p)| usize::from(p) != i + 1) {
                    break v;
                }
            }
        }
    };
    Ok(Permutation(perm))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DhtError {
    #[error("round {0} already open")]
    RoundExists(u32),
    #[error("duplicate data for round {round} path {path_no}")]
    DuplicateData { round: u32, path_no: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbaOutcome {
    Credited { round_complete: bool },
    Duplicate,
    Stale,
}

#[derive(Debug, Default, Clone)]
struct SenderRound {
    entries: BTreeMap<u8, DhtEntry>,
    closed: bool,
}

/// Sender-side Data Hash Table.
#[derive(Debug, Default, Clone)]
pub struct SenderDht {
    rounds: BTreeMap<u32, SenderRound>,
}

impl SenderDht {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one entry per selected path (not yet good, busy, unacked) and
    /// returns the headers to put on the round's packets, in path order.
    pub fn open_round(
        &mut self,
        round: u32,
        paths: &[SelectedPath],
        perm: &Permutation,
    ) -> Result<Vec<PBAckHeader>, DhtError> {
        if self.rounds.contains_key(&round) {
            return Err(DhtError::RoundExists(round));
        }
        let np = paths.len() as u8;
        let mut r = SenderRound::default();
        let mut headers = Vec::with_capacity(paths.len());
        for p in paths {
            let ack = perm.ack_path(p.number);
            r.entries.insert(
                p.number,
                DhtEntry {
                    round,
                    path_no: p.number,
                    ack_path_no: ack,
                    path: p.entry.path.clone(),
                    path_good: false,
                    path_free: false,
                    ack_done: false,
                },
            );
            headers.push(PBAckHeader {
                round,
                path_no: p.number,
                ack_path_no: ack,
                path_count: np,
                message: MessageType::Data,
            });
        }
        self.rounds.insert(round, r);
        Ok(headers)
    }

    /// Credits the acked data path (acked, good, free) and the path that
    /// carried the ack (good, free).
    pub fn receive_pba(&mut self, round: u32, path_no: u8, ack_path_no: u8) -> PbaOutcome {
        let Some(r) = self.rounds.get_mut(&round).filter(|r| !r.closed) else {
            return PbaOutcome::Stale;
        };
        match r.entries.get_mut(&path_no) {
            None => return PbaOutcome::Stale,
            Some(e) if e.ack_done => return PbaOutcome::Duplicate,
            Some(e) => {
                e.ack_done = true;
                e.path_good = true;
                e.path_free = true;
            }
        }
        if let Some(carrier) = r.entries.get_mut(&ack_path_no) {
            carrier.path_good = true;
            carrier.path_free = true;
        }
        let round_complete = r.entries.values().all(|e| e.ack_done);
        if round_complete {
            r.closed = true;
        }
        PbaOutcome::Credited { round_complete }
    }

    /// Closes the round and returns the entries still unacked and unconfirmed.
    /// Returns `None` for unknown or already-closed rounds.
    pub fn timeout(&mut self, round: u32) -> Option<Vec<DhtEntry>> {
        let r = self.rounds.get_mut(&round).filter(|r| !r.closed)?;
        r.closed = true;
        for e in r.entries.values_mut() {
            e.path_free = true;
        }
        Some(
            r.entries
                .values()
                .filter(|e| !e.ack_done && !e.path_good)
                .cloned()
                .collect(),
        )
    }

    pub fn entries(&self, round: u32) -> impl Iterator<Item = &DhtEntry> {
        self.rounds
            .get(&round)
            .into_iter()
            .flat_map(|r| r.entries.values())
    }

    pub fn all_entries(&self) -> impl Iterator<Item = &DhtEntry> {
        self.rounds.values().flat_map(|r| r.entries.values())
    }

    pub fn is_closed(&self, round: u32) -> bool {
        self.rounds.get(&round).is_none_or(|r| r.closed)
    }

    /// True when every path of the round is free again.
    pub fn all_free(&self, round: u32) -> bool {
        self.entries(round).all(|e| e.path_free)
    }

    /// Fewest-hop confirmed path of the round, lowest path number on ties.
    pub fn shortest_good_path(&self, round: u32) -> Option<&DhtEntry> {
        self.entries(round)
            .filter(|e| e.path_good)
            .min_by_key(|e| (e.path.len(), e.path_no))
    }

    pub fn mark_good(&mut self, round: u32, path_no: u8) {
        if let Some(e) = self
            .rounds
            .get_mut(&round)
            .and_then(|r| r.entries.get_mut(&path_no))
        {
            e.path_good = true;
        }
    }

    /// Drops bookkeeping for closed rounds older than `keep_from`.
    pub fn prune_before(&mut self, keep_from: u32) {
        self.rounds.retain(|&k, r| k >= keep_from || !r.closed);
    }
}

/// An acknowledgement the destination must send: ack for data `path_no`,
/// travelling back over `route` (destination first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbaDispatch {
    pub round: u32,
    pub path_no: u8,
    pub ack_path_no: u8,
    pub route: Vec<NodeId>,
}

/// Destination-side Data Hash Table.
#[derive(Debug, Default, Clone)]
pub struct DestinationDht {
    rounds: BTreeMap<u32, BTreeMap<u8, DhtEntry>>,
}

fn reversed(path: &[NodeId]) -> Vec<NodeId> {
    path.iter().rev().copied().collect()
}

impl DestinationDht {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an arrived data packet (`path` is its source route, sender
    /// first) and returns every acknowledgement that became sendable.
    ///
    /// An ack for packet `E` travels on path `E.ack_path_no` and can only be
    /// sent once some packet of the same round has arrived on that path,
    /// since that arrival provides the reverse route.
    pub fn process_data(
        &mut self,
        header: &PBAckHeader,
        path: &[NodeId],
    ) -> Result<Vec<PbaDispatch>, DhtError> {
        let round = self.rounds.entry(header.round).or_default();
        if round.contains_key(&header.path_no) {
            return Err(DhtError::DuplicateData {
                round: header.round,
                path_no: header.path_no,
            });
        }
        let mut out = Vec::new();
        let back = reversed(path);

        // Pending acks that were waiting for this path.
        for e in round.values_mut() {
            if e.ack_path_no == header.path_no && !e.ack_done {
                out.push(PbaDispatch {
                    round: header.round,
                    path_no: e.path_no,
                    ack_path_no: e.ack_path_no,
                    route: back.clone(),
                });
                e.ack_done = true;
                e.path_good = true;
                e.path_free = true;
            }
        }

        // Own ack, if its carrier path is already live.
        let mut own = DhtEntry {
            round: header.round,
            path_no: header.path_no,
            ack_path_no: header.ack_path_no,
            path: path.to_vec(),
            path_good: false,
            path_free: false,
            ack_done: false,
        };
        if let Some(carrier) = round.get(&header.ack_path_no) {
            out.push(PbaDispatch {
                round: header.round,
                path_no: header.path_no,
                ack_path_no: header.ack_path_no,
                route: reversed(&carrier.path),
            });
            own.ack_done = true;
            own.path_good = true;
            own.path_free = true;
        }
        round.insert(header.path_no, own);
        Ok(out)
    }

    pub fn entries(&self, round: u32) -> impl Iterator<Item = &DhtEntry> {
        self.rounds.get(&round).into_iter().flat_map(|r| r.values())
    }

    /// Marks every stored entry with this path as good.
    pub fn mark_path_good(&mut self, path: &[NodeId]) {
        for e in self.rounds.values_mut().flat_map(|r| r.values_mut()) {
            if e.path == path {
                e.path_good = true;
            }
        }
    }

    pub fn prune_before(&mut self, keep_from: u32) {
        self.rounds.retain(|&k, _| k >= keep_from);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Alarm { accused: NodeId },
    PathOk,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathCheckError {
    #[error("path-check payload is not a path ending at {0}")]
    Malformed(NodeId),
}

/// Destination's check of a suspect path: the node just before `dest` claims
/// a direct link, which must match the destination's current neighbour list.
pub fn check_suspect_path(
    dest: NodeId,
    neighbors: &[NodeId],
    path: &[NodeId],
) -> Result<Verdict, PathCheckError> {
    match path {
        [.., claimed, last] if *last == dest && *claimed != dest => {
            if neighbors.contains(claimed) {
                Ok(Verdict::PathOk)
            } else {
                Ok(Verdict::Alarm { accused: *claimed })
            }
        }
        _ => Err(PathCheckError::Malformed(dest)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlarmPacket {
    pub accused: NodeId,
    pub reporter: NodeId,
    pub flood_id: u32,
    pub ttl: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmAction {
    Duplicate,
    Accepted { rebroadcast: Option<AlarmPacket> },
}

/// Per-node alarm bookkeeping and blacklist.
#[derive(Debug, Default, Clone)]
pub struct AlarmRegistry {
    seen: HashSet<(NodeId, u32)>,
    blacklist: BTreeSet<NodeId>,
}

impl AlarmRegistry {
    pub fn handle_alarm(&mut self, alarm: &AlarmPacket) -> AlarmAction {
        if !self.seen.insert((alarm.reporter, alarm.flood_id)) {
            return AlarmAction::Duplicate;
        }
        self.blacklist.insert(alarm.accused);
        let rebroadcast = (alarm.ttl > 0).then(|| AlarmPacket {
            ttl: alarm.ttl - 1,
            ..*alarm
        });
        AlarmAction::Accepted { rebroadcast }
    }

    pub fn blacklist(&mut self, node: NodeId) {
        self.blacklist.insert(node);
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.blacklist.contains(&node)
    }

    pub fn any_blacklisted(&self, path: &[NodeId]) -> bool {
        !self.blacklist.is_empty() && path.iter().any(|n| self.blacklist.contains(n))
    }

    pub fn blacklisted(&self) -> impl Iterator<Item = &NodeId> {
        self.blacklist.iter()
    }
}
