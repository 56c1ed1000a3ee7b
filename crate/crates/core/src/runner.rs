//! Scenario matrices: expansion into runs, execution and CSV summaries.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::analysis::MetricsReport;
use crate::config::{ScenarioConfig, ScenarioFile};
use crate::sim::{run_scenario, RunOutcome, Scenario, SimError};
use crate::trace::TraceSink;

pub const CSV_HEADER: &str = "scenario_id,seed,protocol,nodes,max_speed,k,attackers,data_sent,data_received,delivery_ratio,throughput_bps,ro_pct,detections,false_positives";

/// One concrete run: a resolved configuration plus its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: ScenarioConfig,
    pub seed: u64,
}

impl RunSpec {
    pub fn scenario(&self) -> Scenario {
        Scenario::from_config(&self.config, self.seed)
    }

    /// File name for this run's event log.
    pub fn trace_name(&self, index: usize) -> String {
        let id: String = self
            .config
            .scenario_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{index:04}_{id}_{}_seed{}.jsonl", self.config.protocol, self.seed)
    }
}

/// Every run of every matrix cell in deterministic order: cells in matrix
/// order, repetitions with consecutive seeds within a cell.
pub fn plan(configs: &[ScenarioConfig]) -> Vec<RunSpec> {
    configs
        .iter()
        .flat_map(|c| {
            (0..u64::from(c.repetitions)).map(move |r| RunSpec {
                config: c.clone(),
                seed: c.seed.wrapping_add(r),
            })
        })
        .collect()
}

pub fn plan_file(file: &ScenarioFile) -> Result<Vec<RunSpec>, crate::config::ConfigError> {
    Ok(plan(&file.validate()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario_id: String,
    pub seed: u64,
    pub protocol: crate::config::Protocol,
    pub nodes: u32,
    pub max_speed: f64,
    pub k: u32,
    pub attackers: u32,
    pub data_sent: u64,
    pub data_received: u64,
    pub delivery_ratio: f64,
    pub throughput_bps: f64,
    pub ro_pct: f64,
    pub detections: u64,
    pub false_positives: u64,
}

impl ResultRow {
    pub fn new(spec: &RunSpec, report: &MetricsReport) -> Self {
        ResultRow {
            scenario_id: spec.config.scenario_id.clone(),
            seed: spec.seed,
            protocol: spec.config.protocol,
            nodes: spec.config.node_count,
            max_speed: spec.config.max_speed,
            k: spec.config.k_max,
            attackers: spec.config.attackers.count(),
            data_sent: report.data_sent,
            data_received: report.data_received,
            delivery_ratio: report.delivery_ratio(),
            throughput_bps: report.throughput_bps(),
            ro_pct: report.routing_overhead_pct(),
            detections: report.detections,
            false_positives: report.false_positives,
        }
    }

    pub fn to_csv(&self) -> String {
        let id = if self.scenario_id.contains([',', '"', '\n']) {
            format!("\"{}\"", self.scenario_id.replace('"', "\"\""))
        } else {
            self.scenario_id.clone()
        };
        format!(
            "{id},{},{},{},{},{},{},{},{},{:.4},{:.1},{:.2},{},{}",
            self.seed,
            self.protocol,
            self.nodes,
            self.max_speed,
            self.k,
            self.attackers,
            self.data_sent,
            self.data_received,
            self.delivery_ratio,
            self.throughput_bps,
            self.ro_pct,
            self.detections,
            self.false_positives
        )
    }
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

/// Executes one run, writing its event log under `trace_dir` when given.
pub fn execute(
    spec: &RunSpec,
    index: usize,
    trace_dir: Option<&Path>,
) -> Result<(ResultRow, Option<PathBuf>), SimError> {
    let (sink, path) = match trace_dir {
        Some(dir) => {
            let path = dir.join(spec.trace_name(index));
            let file = File::create(&path)?;
            (TraceSink::Writer(Box::new(BufWriter::new(file))), Some(path))
        }
        None => (TraceSink::None, None),
    };
    let RunOutcome { report, .. } = run_scenario(spec.scenario(), sink)?;
    Ok((ResultRow::new(spec, &report), path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetitions_use_consecutive_seeds() {
        let cfg = ScenarioConfig {
            seed: 7,
            repetitions: 3,
            ..ScenarioConfig::default()
        };
        let seeds: Vec<u64> = plan(&[cfg]).iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![7, 8, 9]);
    }

    #[test]
    fn header_has_fourteen_columns() {
        assert_eq!(CSV_HEADER.split(',').count(), 14);
    }

    #[test]
    fn trace_names_are_filesystem_safe() {
        let spec = RunSpec {
            config: ScenarioConfig {
                scenario_id: "a b/c".into(),
                ..ScenarioConfig::default()
            },
            seed: 3,
        };
        assert_eq!(spec.trace_name(2), "0002_a_b_c_aomsr_seed3.jsonl");
    }
}
