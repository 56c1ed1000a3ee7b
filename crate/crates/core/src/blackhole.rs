//! Black-hole attacker: answers every route request with a forged best
//! route that claims a direct link to the destination, then silently drops
//! whatever traffic it attracts.

use std::collections::HashMap;

use thiserror::Error;

use crate::aodv::{ControlKind, ControlPacket};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackerProfile {
    pub node: NodeId,
    pub forged_hop_count: u32,
    pub seq_inflation: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("forged_hop_count must be at least 1")]
    HopCount,
    #[error("seq_inflation must be positive")]
    SeqInflation,
}

impl AttackerProfile {
    pub fn new(node: NodeId) -> Self {
        AttackerProfile {
            node,
            forged_hop_count: 1,
            seq_inflation: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.forged_hop_count < 1 {
            return Err(ProfileError::HopCount);
        }
        if self.seq_inflation == 0 {
            return Err(ProfileError::SeqInflation);
        }
        Ok(())
    }
}

/// Traffic classes an attacker may receive for forwarding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forwardable {
    Data,
    PathCheck,
    Pba,
    Verdict,
    Control(ControlKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackerAction {
    /// Reply immediately with this forged RREP; do not rebroadcast.
    Forge(ControlPacket),
    /// Destroy the packet and count it as a malicious drop.
    Drop,
    /// Not forwarded but not counted either (floods the attacker stays out of).
    Ignore,
}

/// Attacker state: its profile and the highest destination sequence number
/// it has observed per destination.
#[derive(Debug, Clone)]
pub struct BlackHole {
    profile: AttackerProfile,
    max_seen: HashMap<NodeId, u32>,
    malicious_drops: u64,
}

impl BlackHole {
    pub fn new(profile: AttackerProfile) -> Self {
        BlackHole {
            profile,
            max_seen: HashMap::new(),
            malicious_drops: 0,
        }
    }

    pub fn profile(&self) -> &AttackerProfile {
        &self.profile
    }

    pub fn malicious_drops(&self) -> u64 {
        self.malicious_drops
    }

    pub fn observe_seq(&mut self, destination: NodeId, seq: u32) {
        let e = self.max_seen.entry(destination).or_insert(0);
        *e = (*e).max(seq);
    }

    /// Forged reply: the RREQ's path extended with `[attacker, destination]`,
    /// minimal hop count and an inflated sequence number.
    pub fn forge_rrep(&mut self, rreq: &ControlPacket) -> ControlPacket {
        self.observe_seq(rreq.destination, rreq.dest_seq);
        let seen = self.max_seen[&rreq.destination];
        let mut path = rreq.accumulated_path.clone();
        path.push(self.profile.node);
        path.push(rreq.destination);
        ControlPacket {
            kind: ControlKind::Rrep,
            origin: rreq.origin,
            destination: rreq.destination,
            dest_seq: seen.saturating_add(self.profile.seq_inflation),
            hop_count: self.profile.forged_hop_count,
            accumulated_path: path,
            broadcast_id: rreq.broadcast_id,
        }
    }

    /// Data, path checks, acknowledgements and verdicts are dropped; RREQs are
    /// answered with a forgery. Callers apply their own duplicate filter to
    /// RREQs first.
    pub fn on_receive(&mut self, what: Forwardable, rreq: Option<&ControlPacket>) -> AttackerAction {
        match what {
            Forwardable::Control(ControlKind::Rreq) => match rreq {
                Some(r) => AttackerAction::Forge(self.forge_rrep(r)),
                None => AttackerAction::Ignore,
            },
            Forwardable::Control(ControlKind::Rrep) => {
                if let Some(r) = rreq {
                    self.observe_seq(r.destination, r.dest_seq);
                }
                AttackerAction::Ignore
            }
            Forwardable::Data
            | Forwardable::PathCheck
            | Forwardable::Pba
            | Forwardable::Verdict
            | Forwardable::Control(ControlKind::Pba) => {
                self.malicious_drops += 1;
                AttackerAction::Drop
            }
            Forwardable::Control(_) => AttackerAction::Ignore,
        }
    }
}
