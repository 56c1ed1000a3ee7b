//! Closed-form overhead comparison against the acknowledgement-based
//! baseline, and run metrics computed from event logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::config::Protocol;
use crate::engine::SimTime;
use crate::topology::NodeId;
use crate::trace::{Counter, TraceRecord, TrafficClass};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("k must be at least 1")]
    ZeroPaths,
    #[error("malicious paths p={p} must be fewer than total paths k={k}")]
    TooManyMalicious { p: u32, k: u32 },
    #[error("n must be at least 1")]
    ZeroHops,
}

/// `p` malicious paths out of `k`, with `n` intermediate nodes per path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheadInputs {
    pub p: u32,
    pub k: u32,
    pub n: u32,
}

impl OverheadInputs {
    pub fn new(p: u32, k: u32, n: u32) -> Result<Self, AnalysisError> {
        if k == 0 {
            return Err(AnalysisError::ZeroPaths);
        }
        if n == 0 {
            return Err(AnalysisError::ZeroHops);
        }
        if p >= k {
            return Err(AnalysisError::TooManyMalicious { p, k });
        }
        Ok(OverheadInputs { p, k, n })
    }

    /// Overhead with the path-check cost `p*n` as control and the round's
    /// `k*n` data transactions; `n` cancels.
    pub fn overhead_percent(&self) -> f64 {
        let cp = f64::from(self.p * self.n);
        let dp = f64::from(self.k * self.n);
        cp / (cp + dp) * 100.0
    }
}

/// `100 * p / (p + k)`.
pub fn routing_overhead_percent(p: u32, k: u32) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroPaths);
    }
    Ok(100.0 * f64::from(p) / f64::from(p + k))
}

/// Baseline: end-to-end ack plus two-hop acks, `CP = 2n`, `DP = n`.
pub fn aack_overhead_percent() -> f64 {
    200.0 / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransactionCounts {
    pub aack_total: u32,
    pub etwoack: u32,
    pub eeack: u32,
    pub pback_round: u32,
    pub pback_detection_extra: u32,
}

pub fn transaction_counts(n: u32, k: u32) -> Result<TransactionCounts, AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::ZeroHops);
    }
    if k == 0 {
        return Err(AnalysisError::ZeroPaths);
    }
    Ok(TransactionCounts {
        aack_total: 3 * n,
        etwoack: 2 * n,
        eeack: n,
        pback_round: k * n,
        pback_detection_extra: n,
    })
}

/// Cells where the published table disagrees with the formula beyond
/// rounding: `(p, k, published value)`.
pub const TABLE2_ERRATA: [(u32, u32, &str); 2] = [(3, 4, "42.55"), (3, 10, "23.07")];

pub const TABLE2_P: [u32; 3] = [1, 2, 3];
pub const TABLE2_K: std::ops::RangeInclusive<u32> = 1..=10;

#[derive(Debug, Clone, PartialEq)]
pub struct Table2 {
    /// `cells[p-1][k-1]`, `None` where `p > k`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub aack: f64,
}

impl Table2 {
    pub fn cell(&self, p: u32, k: u32) -> Option<f64> {
        self.cells[(p - 1) as usize][(k - 1) as usize]
    }

    fn annotation(p: u32, k: u32, value: f64) -> Option<String> {
        TABLE2_ERRATA
            .iter()
            .find(|(ep, ek, _)| *ep == p && *ek == k)
            .map(|(_, _, printed)| {
                format!("published value {printed} differs; formula gives {value:.2}")
            })
    }

    /// Fixed-width text table with the baseline row and errata footnotes.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Routing overhead (%) = 100 * p / (p + k)");
        let _ = write!(out, "{:<6}", "p\\k");
        for k in TABLE2_K {
            let _ = write!(out, "{k:>8}");
        }
        out.push('\n');
        let mut notes = Vec::new();
        for p in TABLE2_P {
            let _ = write!(out, "{p:<6}");
            for k in TABLE2_K {
                match self.cell(p, k) {
                    None => {
                        let _ = write!(out, "{:>8}", "-NA-");
                    }
                    Some(v) => match Self::annotation(p, k, v) {
                        Some(note) => {
                            notes.push(format!("* (p={p}, k={k}) {note}"));
                            let _ = write!(out, "{:>7.2}*", v);
                        }
                        None => {
                            let _ = write!(out, "{:>8.2}", v);
                        }
                    },
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<6}", "AACK");
        for _ in TABLE2_K {
            let _ = write!(out, "{:>8.2}", self.aack);
        }
        out.push('\n');
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
        out
    }

    /// One row per cell: `p,k,ro_pct,annotation`; baseline rows use `p=AACK`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("p,k,ro_pct,annotation\n");
        for p in TABLE2_P {
            for k in TABLE2_K {
                match self.cell(p, k) {
                    None => {
                        let _ = writeln!(out, "{p},{k},-NA-,");
                    }
                    Some(v) => {
                        let note = Self::annotation(p, k, v).unwrap_or_default();
                        let _ = writeln!(out, "{p},{k},{v:.2},{note}");
                    }
                }
            }
        }
        for k in TABLE2_K {
            let _ = writeln!(out, "AACK,{k},{:.2},", self.aack);
        }
        out
    }
}

pub fn generate_table2() -> Table2 {
    let cells = TABLE2_P
        .iter()
        .map(|&p| {
            TABLE2_K
                .map(|k| (p <= k).then(|| routing_overhead_percent(p, k).expect("k >= 1")))
                .collect()
        })
        .collect();
    Table2 {
        cells,
        aack: aack_overhead_percent(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub nodes: u32,
    pub payload_bytes: u32,
    pub sim_time: SimTime,
    pub attackers: BTreeSet<NodeId>,
    pub data_sent: u64,
    pub data_received: u64,
    /// Data hop-transmissions.
    pub data_hops: u64,
    /// Control hop-transmissions by class.
    pub control_packets: BTreeMap<TrafficClass, u64>,
    /// Control transmissions made by nodes other than the packet's originator.
    pub control_relays: BTreeMap<TrafficClass, u64>,
    pub malicious_drops: u64,
    pub link_drops: u64,
    pub rounds: u64,
    pub accused: BTreeSet<NodeId>,
    pub detections: u64,
    pub false_positives: u64,
    pub counters: BTreeMap<Counter, u64>,
    pub events: u64,
}

impl MetricsReport {
    pub fn control_total(&self) -> u64 {
        self.control_packets.values().sum()
    }

    pub fn control(&self, class: TrafficClass) -> u64 {
        self.control_packets.get(&class).copied().unwrap_or(0)
    }

    pub fn relays(&self, class: TrafficClass) -> u64 {
        self.control_relays.get(&class).copied().unwrap_or(0)
    }

    pub fn counter(&self, c: Counter) -> u64 {
        self.counters.get(&c).copied().unwrap_or(0)
    }

    /// Received over sent application packets; 0 when nothing was sent.
    pub fn delivery_ratio(&self) -> f64 {
        if self.data_sent == 0 {
            0.0
        } else {
            self.data_received as f64 / self.data_sent as f64
        }
    }

    /// `CP / (CP + DP) * 100` over hop-transmissions.
    pub fn routing_overhead_pct(&self) -> f64 {
        let cp = self.control_total() as f64;
        let total = cp + self.data_hops as f64;
        if total == 0.0 {
            0.0
        } else {
            cp / total * 100.0
        }
    }

    pub fn throughput_bps(&self) -> f64 {
        let secs = self.sim_time.as_secs_f64();
        if secs == 0.0 {
            0.0
        } else {
            self.data_received as f64 * f64::from(self.payload_bytes) * 8.0 / secs
        }
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("event log is empty")]
    Empty,
    #[error("event log does not start with a header record")]
    MissingHeader,
    #[error("event log is truncated: no end record")]
    Truncated,
    #[error("records after end record at line {0}")]
    TrailingRecords(usize),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Folds trace records into a [`MetricsReport`].
#[derive(Debug, Default)]
pub struct MetricsCollector {
    report: Option<MetricsReport>,
    ended: bool,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TraceRecord) {
        if let TraceRecord::Header {
            scenario_id,
            seed,
            protocol,
            nodes,
            payload_bytes,
            attackers,
            sim_time,
        } = rec
        {
            self.report = Some(MetricsReport {
                scenario_id: scenario_id.clone(),
                seed: *seed,
                protocol: *protocol,
                nodes: *nodes,
                payload_bytes: *payload_bytes,
                sim_time: *sim_time,
                attackers: attackers.iter().copied().collect(),
                data_sent: 0,
                data_received: 0,
                data_hops: 0,
                control_packets: BTreeMap::new(),
                control_relays: BTreeMap::new(),
                malicious_drops: 0,
                link_drops: 0,
                rounds: 0,
                accused: BTreeSet::new(),
                detections: 0,
                false_positives: 0,
                counters: BTreeMap::new(),
                events: 0,
            });
            return;
        }
        let Some(r) = self.report.as_mut() else {
            return;
        };
        match rec {
            TraceRecord::Header { .. } => unreachable!(),
            TraceRecord::Event { .. } => {}
            TraceRecord::Tx { class, relay, .. } => {
                if class.is_control() {
                    *r.control_packets.entry(*class).or_default() += 1;
                    if *relay {
                        *r.control_relays.entry(*class).or_default() += 1;
                    }
                } else {
                    r.data_hops += 1;
                }
            }
            TraceRecord::LinkDrop { .. } => r.link_drops += 1,
            TraceRecord::MaliciousDrop { .. } => r.malicious_drops += 1,
            TraceRecord::AppSend { .. } => r.data_sent += 1,
            TraceRecord::AppRecv { .. } => r.data_received += 1,
            TraceRecord::Selection { .. } | TraceRecord::Suspect { .. } => {}
            TraceRecord::RoundOpen { .. } => r.rounds += 1,
            TraceRecord::Alarm { accused, .. } => {
                if r.accused.insert(*accused) {
                    if r.attackers.contains(accused) {
                        r.detections += 1;
                    } else {
                        r.false_positives += 1;
                    }
                }
            }
            TraceRecord::Note { counter, .. } => *r.counters.entry(*counter).or_default() += 1,
            TraceRecord::End { events, .. } => {
                r.events = *events;
                self.ended = true;
            }
        }
    }

    pub fn finish(self) -> Result<MetricsReport, MetricsError> {
        let report = self.report.ok_or(MetricsError::MissingHeader)?;
        if !self.ended {
            return Err(MetricsError::Truncated);
        }
        Ok(report)
    }
}

/// Recomputes a run's metrics from its newline-delimited event log.
pub fn compute_metrics(log: &str) -> Result<MetricsReport, MetricsError> {
    let mut collector = MetricsCollector::new();
    let mut saw_any = false;
    for (i, line) in log.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if collector.ended {
            return Err(MetricsError::TrailingRecords(i + 1));
        }
        let rec: TraceRecord =
            serde_json::from_str(line).map_err(|source| MetricsError::Parse { line: i + 1, source })?;
        if !saw_any && !matches!(rec, TraceRecord::Header { .. }) {
            return Err(MetricsError::MissingHeader);
        }
        saw_any = true;
        collector.observe(&rec);
    }
    if !saw_any {
        return Err(MetricsError::Empty);
    }
    collector.finish()
}
