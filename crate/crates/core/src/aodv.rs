//! Reactive route discovery with full-path accumulation.
//!
//! RREQs collect the node sequence they traverse and the destination echoes
//! that sequence in its RREP, so the source ends up with a table of complete
//! paths rather than a single next hop. Intermediate nodes never answer from
//! cache.

use std::cmp::Reverse;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::topology::NodeId;

/// Default number of discovery retries after the first attempt.
pub const DEFAULT_RREQ_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Rreq,
    Rrep,
    Rerr,
    Alarm,
    Pba,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlPacket {
    pub kind: ControlKind,
    pub origin: NodeId,
    pub destination: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
    pub accumulated_path: Vec<NodeId>,
    pub broadcast_id: u32,
}

impl ControlPacket {
    pub fn rreq(origin: NodeId, destination: NodeId, broadcast_id: u32, dest_seq: u32) -> Self {
        ControlPacket {
            kind: ControlKind::Rreq,
            origin,
            destination,
            dest_seq,
            hop_count: 0,
            accumulated_path: vec![origin],
            broadcast_id,
        }
    }

    /// Route error reporting that `upstream -> downstream` is broken.
    pub fn rerr(upstream: NodeId, downstream: NodeId, source: NodeId) -> Self {
        ControlPacket {
            kind: ControlKind::Rerr,
            origin: upstream,
            destination: source,
            dest_seq: 0,
            hop_count: 0,
            accumulated_path: vec![upstream, downstream],
            broadcast_id: 0,
        }
    }

    pub fn broken_link(&self) -> Option<(NodeId, NodeId)> {
        match (self.kind, self.accumulated_path.as_slice()) {
            (ControlKind::Rerr, [a, b]) => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn involves(&self, node: NodeId) -> bool {
        self.accumulated_path.contains(&node)
    }

    /// For an RREP held by `node`, the next node back toward the origin.
    pub fn reverse_next_hop(&self, node: NodeId) -> Option<NodeId> {
        let idx = self.accumulated_path.iter().position(|&n| n == node)?;
        idx.checked_sub(1).map(|i| self.accumulated_path[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RreqAction {
    Forward(ControlPacket),
    Reply(ControlPacket),
    Drop,
}

/// What an honest node does with a first-seen RREQ. `own_seq` is the node's
/// destination sequence number, used only when it is the target.
pub fn handle_rreq(node: NodeId, rreq: &ControlPacket, own_seq: u32) -> RreqAction {
    debug_assert_eq!(rreq.kind, ControlKind::Rreq);
    if rreq.accumulated_path.contains(&node) {
        return RreqAction::Drop;
    }
    let mut path = rreq.accumulated_path.clone();
    path.push(node);
    if node == rreq.destination {
        RreqAction::Reply(ControlPacket {
            kind: ControlKind::Rrep,
            origin: rreq.origin,
            destination: node,
            dest_seq: own_seq,
            hop_count: (path.len() - 1) as u32,
            accumulated_path: path,
            broadcast_id: rreq.broadcast_id,
        })
    } else {
        RreqAction::Forward(ControlPacket {
            hop_count: rreq.hop_count + 1,
            accumulated_path: path,
            ..rreq.clone()
        })
    }
}

/// Per-node duplicate suppression on `(origin, broadcast_id)`.
#[derive(Debug, Default, Clone)]
pub struct RreqFilter {
    seen: HashSet<(NodeId, u32)>,
}

impl RreqFilter {
    /// True the first time a given flood is seen.
    pub fn first_sighting(&mut self, origin: NodeId, broadcast_id: u32) -> bool {
        self.seen.insert((origin, broadcast_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultipathRouteEntry {
    pub destination: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
    pub path: Vec<NodeId>,
    pub est_delay: SimTime,
}

impl MultipathRouteEntry {
    pub fn from_rrep(rrep: &ControlPacket, per_hop_latency: SimTime) -> Self {
        MultipathRouteEntry {
            destination: rrep.destination,
            dest_seq: rrep.dest_seq,
            hop_count: rrep.hop_count,
            path: rrep.accumulated_path.clone(),
            est_delay: per_hop_latency.mul(u64::from(rrep.hop_count)),
        }
    }

    pub fn uses_link(&self, a: NodeId, b: NodeId) -> bool {
        self.path
            .windows(2)
            .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }

    /// Nodes strictly between source and destination.
    pub fn interior(&self) -> &[NodeId] {
        match self.path.len() {
            0..=2 => &[],
            n => &self.path[1..n - 1],
        }
    }
}

pub fn is_simple_path(path: &[NodeId]) -> bool {
    let mut seen = HashSet::with_capacity(path.len());
    path.iter().all(|n| seen.insert(*n))
}

/// AODV's freshness rule: higher sequence number wins, then fewer hops.
pub fn aodv_prefers(candidate: &MultipathRouteEntry, current: &MultipathRouteEntry) -> bool {
    (candidate.dest_seq, Reverse(candidate.hop_count))
        > (current.dest_seq, Reverse(current.hop_count))
}

/// The source's Modified Routing Table: every distinct path learned for one
/// destination.
#[derive(Debug, Default, Clone)]
pub struct RouteTable {
    entries: Vec<MultipathRouteEntry>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when an identical path is already stored or the path is
    /// not simple.
    pub fn insert(&mut self, entry: MultipathRouteEntry) -> bool {
        if !is_simple_path(&entry.path) || self.entries.iter().any(|e| e.path == entry.path) {
            return false;
        }
        self.entries.push(entry);
        true
    }

    pub fn entries(&self) -> &[MultipathRouteEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Best entry under AODV's selection rule, first-learned on ties.
    pub fn best_aodv(&self) -> Option<&MultipathRouteEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&MultipathRouteEntry>, e| match best {
                Some(b) if !aodv_prefers(e, b) => Some(b),
                _ => Some(e),
            })
    }

    /// Drops every path through `node`; returns how many were removed.
    pub fn purge_node(&mut self, node: NodeId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.path.contains(&node));
        before - self.entries.len()
    }

    pub fn purge_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.uses_link(a, b));
        before - self.entries.len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("no route from {src} to {dst} after {attempts} discovery attempts")]
    NoRoute {
        src: NodeId,
        dst: NodeId,
        attempts: u32,
    },
}
