//! Packet-level simulation of on-demand multipath routing with per-round
//! acknowledgements, black-hole attackers and their detection.

pub mod analysis;
pub mod aodv;
pub mod aomsr;
pub mod blackhole;
pub mod config;
pub mod engine;
pub mod runner;
pub mod sim;
pub mod topology;
pub mod trace;

pub use analysis::{compute_metrics, generate_table2, MetricsReport, Table2};
pub use aodv::{ControlPacket, MultipathRouteEntry, RouteTable};
pub use aomsr::{
    select_multipaths, PBAckHeader, PathSelectionParams, Permutation, PermutationPolicy,
    SelectedPath,
};
pub use blackhole::{AttackerProfile, BlackHole};
pub use config::{Attackers, ConfigError, Protocol, ScenarioConfig, ScenarioFile};
pub use engine::{EventKind, RngStreams, Scheduler, SimTime};
pub use sim::{run_scenario, FlowSpec, Placement, RunOutcome, Scenario, SimError};
pub use topology::{Area, LinkModel, NodeId, Position, RadioParams};
pub use trace::{Counter, TraceRecord, TraceSink, TrafficClass};
