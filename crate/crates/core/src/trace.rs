//! Newline-delimited JSON event log.
//!
//! A log starts with a `header` record and ends with an `end` record; the
//! metrics in [`crate::analysis`] are computed by folding over these records,
//! so a run's in-process report and a report recomputed from its log agree.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::config::Protocol;
use crate::engine::{EventKind, SimTime};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    Data,
    Rreq,
    Rrep,
    Rerr,
    Pba,
    PathCheck,
    Verdict,
    Alarm,
}

impl TrafficClass {
    pub fn is_control(self) -> bool {
        self != TrafficClass::Data
    }

    pub const CONTROL: [TrafficClass; 7] = [
        TrafficClass::Rreq,
        TrafficClass::Rrep,
        TrafficClass::Rerr,
        TrafficClass::Pba,
        TrafficClass::PathCheck,
        TrafficClass::Verdict,
        TrafficClass::Alarm,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counter {
    NoRoute,
    InsufficientPaths,
    DetectionAbandoned,
    StalePba,
    DuplicateData,
    QueueOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        scenario_id: String,
        seed: u64,
        protocol: Protocol,
        nodes: u32,
        payload_bytes: u32,
        attackers: Vec<NodeId>,
        sim_time: SimTime,
    },
    /// One per processed scheduler event.
    Event {
        t: SimTime,
        seq: u64,
        kind: EventKind,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        node: Option<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        from: Option<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        packet: Option<u64>,
    },
    /// One radio transmission; `to` is absent for broadcasts. `relay` is set
    /// when the sender is not the packet's originator.
    Tx {
        t: SimTime,
        class: TrafficClass,
        from: NodeId,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        to: Option<NodeId>,
        packet: u64,
        relay: bool,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        hdr: Option<u64>,
    },
    LinkDrop {
        t: SimTime,
        class: TrafficClass,
        from: NodeId,
        to: NodeId,
        packet: u64,
    },
    MaliciousDrop {
        t: SimTime,
        class: TrafficClass,
        node: NodeId,
        packet: u64,
    },
    AppSend {
        t: SimTime,
        flow: u32,
        seq: u64,
    },
    AppRecv {
        t: SimTime,
        flow: u32,
        seq: u64,
    },
    Selection {
        t: SimTime,
        flow: u32,
        paths: Vec<Vec<NodeId>>,
    },
    RoundOpen {
        t: SimTime,
        flow: u32,
        round: u32,
        np: u8,
    },
    Suspect {
        t: SimTime,
        flow: u32,
        round: u32,
        path_no: u8,
        path: Vec<NodeId>,
    },
    Alarm {
        t: SimTime,
        reporter: NodeId,
        accused: NodeId,
    },
    Note {
        t: SimTime,
        counter: Counter,
    },
    End {
        t: SimTime,
        events: u64,
    },
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

/// Where trace lines go. `None` keeps nothing.
pub enum TraceSink {
    None,
    Memory(Vec<String>),
    Writer(Box<dyn Write + Send>),
}

impl TraceSink {
    pub fn is_enabled(&self) -> bool {
        !matches!(self, TraceSink::None)
    }

    pub fn write(&mut self, rec: &TraceRecord) -> io::Result<()> {
        match self {
            TraceSink::None => Ok(()),
            TraceSink::Memory(lines) => {
                lines.push(rec.to_line());
                Ok(())
            }
            TraceSink::Writer(w) => {
                w.write_all(rec.to_line().as_bytes())?;
                w.write_all(b"\n")
            }
        }
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            TraceSink::Writer(w) => w.flush(),
            _ => Ok(()),
        }
    }

    /// The buffered log for in-memory sinks, newline-terminated.
    pub fn memory_text(&self) -> Option<String> {
        match self {
            TraceSink::Memory(lines) => {
                let mut s = lines.join("\n");
                s.push('\n');
                Some(s)
            }
            _ => None,
        }
    }
}
