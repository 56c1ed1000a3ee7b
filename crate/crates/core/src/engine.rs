//! Discrete-event scheduler, simulation clock and labelled random streams.
//!
//! Time is kept as an integer count of microseconds so that two runs of the
//! same scenario order their events identically on every platform. Events
//! that fire at the same instant are processed in insertion order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Simulation clock value, in whole microseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn mul(self, factor: u64) -> SimTime {
        SimTime(self.0.saturating_mul(factor))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PacketDelivery,
    TimerExpiry,
    MobilityWaypoint,
    TrafficTick,
}

#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

/// Returned by [`Scheduler::schedule`]; lets the caller cancel the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled in the past: fire_at {fire_at} < clock {now}")]
    ScheduledInPast { fire_at: SimTime, now: SimTime },
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // Reversed so the max-heap yields the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

pub struct Scheduler<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Queued<P>>,
    live: HashSet<u64>,
    processed: u64,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events still waiting to fire (cancelled ones excluded).
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        kind: EventKind,
        payload: P,
    ) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::ScheduledInPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.heap.push(Queued(SimEvent {
            fire_at,
            seq,
            kind,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: EventKind, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, kind, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns true when the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    /// Pops the next live event with `fire_at <= end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<SimEvent<P>> {
        while let Some(top) = self.heap.peek() {
            if top.0.fire_at > end {
                return None;
            }
            let Queued(ev) = self.heap.pop().expect("peeked");
            if !self.live.remove(&ev.seq) {
                continue;
            }
            self.now = ev.fire_at;
            self.processed += 1;
            return Some(ev);
        }
        None
    }

    /// Moves the clock forward to `end` once the queue holds nothing earlier.
    pub fn advance_to(&mut self, end: SimTime) {
        if end > self.now {
            self.now = end;
        }
    }

    /// Processes every event with `fire_at <= end` in `(fire_at, seq)` order and
    /// leaves the clock at `end`. Returns the number of events handled.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimEvent<P>),
    {
        let mut count = 0;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
            count += 1;
        }
        self.advance_to(end);
        count
    }
}

/// Source of independent deterministic random streams keyed by a text label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The stream for `label`. The same `(seed, label)` always yields the
    /// same sequence; adding a new label never perturbs existing ones.
    ///
    /// Panics on an empty label.
    pub fn stream(&self, label: &str) -> ChaCha8Rng {
        assert!(!label.is_empty(), "rng stream label must be non-empty");
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}
