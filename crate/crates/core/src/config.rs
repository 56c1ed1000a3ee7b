//! Scenario files: flat `key = value` lines with `#` comments. Numeric keys
//! (and `protocol`) accept comma lists; the Cartesian product of all lists is
//! the run matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aomsr::PermutationPolicy;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Aodv,
    Aomsr,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Aodv => "aodv",
            Protocol::Aomsr => "aomsr",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aodv" => Ok(Protocol::Aodv),
            "aomsr" => Ok(Protocol::Aomsr),
            other => Err(format!("expected aodv or aomsr, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AckTimeout {
    Auto,
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attackers {
    /// Drawn at random (from the `attackers` stream) among non-endpoint nodes.
    Count(u32),
    Explicit(Vec<NodeId>),
}

impl Attackers {
    pub fn count(&self) -> u32 {
        match self {
            Attackers::Count(n) => *n,
            Attackers::Explicit(v) => v.len() as u32,
        }
    }
}

/// One fully resolved experiment (no sweeps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub area_width: f64,
    pub area_height: f64,
    pub node_count: u32,
    pub radio_range: f64,
    pub bandwidth: f64,
    pub payload_bytes: u32,
    pub sim_time: f64,
    pub max_speed: f64,
    pub pause_time: f64,
    pub cbr_interval: f64,
    pub protocol: Protocol,
    pub k_max: u32,
    pub delta: f64,
    pub ack_timeout: AckTimeout,
    pub attackers: Attackers,
    /// Extra random flows besides the main one; `None` means `node_count / 10`.
    pub background_flows: Option<u32>,
    pub permutation: PermutationPolicy,
    pub allow_overlap: bool,
    pub seed: u64,
    pub repetitions: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario_id: "scenario".into(),
            area_width: 1000.0,
            area_height: 1000.0,
            node_count: 50,
            radio_range: 250.0,
            bandwidth: 2_000_000.0,
            payload_bytes: 512,
            sim_time: 300.0,
            max_speed: 10.0,
            pause_time: 30.0,
            cbr_interval: 0.25,
            protocol: Protocol::Aomsr,
            k_max: 3,
            delta: 0.02,
            ack_timeout: AckTimeout::Auto,
            attackers: Attackers::Count(0),
            background_flows: None,
            permutation: PermutationPolicy::BackwardShift,
            allow_overlap: false,
            seed: 1,
            repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ScenarioConfig {
    pub fn background_flow_count(&self) -> u32 {
        self.background_flows.unwrap_or(self.node_count / 10)
    }

    /// Every invariant violation, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: String| {
            if !ok {
                v.push(Violation { field, message });
            }
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        check(positive(self.area_width), "area_width", "must be > 0".into());
        check(positive(self.area_height), "area_height", "must be > 0".into());
        check(self.node_count >= 3, "node_count", "node_count ≥ 3".into());
        check(positive(self.radio_range), "radio_range", "must be > 0".into());
        check(positive(self.bandwidth), "bandwidth", "must be > 0".into());
        check(self.payload_bytes > 0, "payload_bytes", "must be > 0".into());
        check(positive(self.sim_time), "sim_time", "must be > 0".into());
        check(
            non_negative(self.max_speed),
            "max_speed",
            "must be ≥ 0 (0 means static)".into(),
        );
        check(non_negative(self.pause_time), "pause_time", "must be ≥ 0".into());
        check(positive(self.cbr_interval), "cbr_interval", "must be > 0".into());
        check(self.k_max >= 2, "k_max", "k_max ≥ 2".into());
        check(self.k_max <= 255, "k_max", "k_max ≤ 255".into());
        check(non_negative(self.delta), "delta", "delta ≥ 0".into());
        if let AckTimeout::Seconds(s) = self.ack_timeout {
            check(positive(s), "ack_timeout", "must be > 0 or auto".into());
        }
        let honest_needed = 2;
        match &self.attackers {
            Attackers::Count(n) => check(
                n + honest_needed <= self.node_count,
                "attackers",
                format!(
                    "attacker count must leave at least {honest_needed} honest nodes (< node_count)"
                ),
            ),
            Attackers::Explicit(ids) => {
                check(
                    ids.iter().all(|id| id.0 < self.node_count),
                    "attacker_ids",
                    "every id must be < node_count".into(),
                );
                let mut sorted = ids.clone();
                sorted.sort();
                sorted.dedup();
                check(
                    sorted.len() == ids.len(),
                    "attacker_ids",
                    "ids must be distinct".into(),
                );
                check(
                    ids.len() as u32 + honest_needed <= self.node_count,
                    "attacker_ids",
                    "attacker count must be < node_count".into(),
                );
            }
        }
        check(self.repetitions >= 1, "repetitions", "must be ≥ 1".into());
        v
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("{field}: invalid value {value:?}: {reason}")]
    InvalidValue {
        field: String,
        value: String,
        reason: String,
    },
    #[error("{field}: does not accept a list of values")]
    NotSweepable { field: String },
    #[error("attackers and attacker_ids are mutually exclusive")]
    AttackerConflict,
    #[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Keys in matrix order (outermost first).
pub const KEYS: &[&str] = &[
    "scenario_id",
    "protocol",
    "node_count",
    "max_speed",
    "k_max",
    "attackers",
    "attacker_ids",
    "area_width",
    "area_height",
    "radio_range",
    "bandwidth",
    "payload_bytes",
    "sim_time",
    "pause_time",
    "cbr_interval",
    "delta",
    "ack_timeout",
    "background_flows",
    "permutation",
    "allow_overlap",
    "seed",
    "repetitions",
];

const NOT_SWEEPABLE: &[&str] = &[
    "scenario_id",
    "attacker_ids",
    "permutation",
    "allow_overlap",
    "seed",
    "repetitions",
];

fn parse_num<T: FromStr>(field: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        field: field.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn apply(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "scenario_id" => cfg.scenario_id = value.to_string(),
        "protocol" => {
            cfg.protocol = value.parse().map_err(|reason| ConfigError::InvalidValue {
                field: key.into(),
                value: value.into(),
                reason,
            })?
        }
        "node_count" => cfg.node_count = parse_num(key, value)?,
        "max_speed" => cfg.max_speed = parse_num(key, value)?,
        "k_max" => cfg.k_max = parse_num(key, value)?,
        "attackers" => cfg.attackers = Attackers::Count(parse_num(key, value)?),
        "attacker_ids" => {
            let ids = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_num::<u32>(key, s).map(NodeId))
                .collect::<Result<Vec<_>, _>>()?;
            cfg.attackers = Attackers::Explicit(ids);
        }
        "area_width" => cfg.area_width = parse_num(key, value)?,
        "area_height" => cfg.area_height = parse_num(key, value)?,
        "radio_range" => cfg.radio_range = parse_num(key, value)?,
        "bandwidth" => cfg.bandwidth = parse_num(key, value)?,
        "payload_bytes" => cfg.payload_bytes = parse_num(key, value)?,
        "sim_time" => cfg.sim_time = parse_num(key, value)?,
        "pause_time" => cfg.pause_time = parse_num(key, value)?,
        "cbr_interval" => cfg.cbr_interval = parse_num(key, value)?,
        "delta" => cfg.delta = parse_num(key, value)?,
        "ack_timeout" => {
            cfg.ack_timeout = if value == "auto" {
                AckTimeout::Auto
            } else {
                AckTimeout::Seconds(parse_num(key, value)?)
            }
        }
        "background_flows" => cfg.background_flows = Some(parse_num(key, value)?),
        "permutation" => {
            cfg.permutation = match value {
                "shift" | "backward_shift" => PermutationPolicy::BackwardShift,
                "random" => PermutationPolicy::RandomDerangement,
                other => {
                    return Err(ConfigError::InvalidValue {
                        field: key.into(),
                        value: other.into(),
                        reason: "expected shift or random".into(),
                    })
                }
            }
        }
        "allow_overlap" => cfg.allow_overlap = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        "repetitions" => cfg.repetitions = parse_num(key, value)?,
        _ => unreachable!("key checked against KEYS"),
    }
    Ok(())
}

/// A parsed scenario file: raw values per key, possibly lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    defaults: ScenarioConfig,
    values: Vec<(&'static str, Vec<String>)>,
}

impl ScenarioFile {
    pub fn parse(text: &str, defaults: ScenarioConfig) -> Result<Self, ConfigError> {
        let mut values: Vec<(&'static str, Vec<String>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax { line: line_no });
            }
            let key = KEYS
                .iter()
                .copied()
                .find(|&known| known == k)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line: line_no,
                    key: k.into(),
                })?;
            if values.iter().any(|(seen, _)| *seen == key) {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: k.into(),
                });
            }
            let list: Vec<String> = if key == "attacker_ids" || key == "scenario_id" {
                vec![v.to_string()]
            } else {
                v.split(',').map(|s| s.trim().to_string()).collect()
            };
            if list.len() > 1 && NOT_SWEEPABLE.contains(&key) {
                return Err(ConfigError::NotSweepable { field: key.into() });
            }
            if list.iter().any(String::is_empty) {
                return Err(ConfigError::Syntax { line: line_no });
            }
            values.push((key, list));
        }
        let has = |k: &str| values.iter().any(|(key, _)| *key == k);
        if has("attackers") && has("attacker_ids") {
            return Err(ConfigError::AttackerConflict);
        }
        values.sort_by_key(|(k, _)| KEYS.iter().position(|x| x == k));
        Ok(ScenarioFile { defaults, values })
    }

    /// Resolves every combination in matrix order without validating.
    pub fn expand(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        let mut out = vec![self.defaults.clone()];
        for (key, list) in &self.values {
            let mut next = Vec::with_capacity(out.len() * list.len());
            for cfg in &out {
                for v in list {
                    let mut c = cfg.clone();
                    apply(&mut c, key, v)?;
                    next.push(c);
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Expands and checks every combination, collecting all violations.
    pub fn validate(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        let configs = self.expand()?;
        let mut all: Vec<Violation> = Vec::new();
        for c in &configs {
            for v in c.violations() {
                if !all.contains(&v) {
                    all.push(v);
                }
            }
        }
        if all.is_empty() {
            Ok(configs)
        } else {
            Err(ConfigError::Invalid(all))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ScenarioConfig>, ConfigError> {
        ScenarioFile::parse(text, ScenarioConfig::default())?.validate()
    }

    #[test]
    fn paper_sweep_file_is_ok() {
        let cfgs = parse(
            "# constant mobility\n\
             node_count = 10,20,30,40,50\n\
             max_speed = 10\npause_time = 30\nsim_time = 300\n\
             protocol = aodv, aomsr\nattackers = 1\nrepetitions = 5\n",
        )
        .unwrap();
        assert_eq!(cfgs.len(), 10);
        assert_eq!(cfgs[0].protocol, Protocol::Aodv);
        assert_eq!(cfgs[0].node_count, 10);
        assert_eq!(cfgs[1].node_count, 20);
        assert_eq!(cfgs[5].protocol, Protocol::Aomsr);
        assert_eq!(cfgs[9].repetitions, 5);
    }

    #[test]
    fn too_few_nodes_is_named() {
        match parse("node_count = 2\n") {
            Err(ConfigError::Invalid(v)) => {
                assert!(v.iter().any(|x| x.field == "node_count" && x.message == "node_count ≥ 3"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_delta_rejected() {
        match parse("delta = -0.5\n") {
            Err(ConfigError::Invalid(v)) => assert_eq!(v[0].field, "delta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_key_errors() {
        assert_eq!(
            parse("node_count 10\n"),
            Err(ConfigError::Syntax { line: 1 })
        );
        assert_eq!(
            parse("\nbogus = 1\n"),
            Err(ConfigError::UnknownKey {
                line: 2,
                key: "bogus".into()
            })
        );
        assert_eq!(
            parse("seed = 1\nseed = 2\n"),
            Err(ConfigError::DuplicateKey {
                line: 2,
                key: "seed".into()
            })
        );
        assert_eq!(
            parse("seed = 1,2\n"),
            Err(ConfigError::NotSweepable {
                field: "seed".into()
            })
        );
        assert_eq!(
            parse("attackers = 1\nattacker_ids = 3\n"),
            Err(ConfigError::AttackerConflict)
        );
        assert!(matches!(
            parse("node_count = ten\n"),
            Err(ConfigError::InvalidValue { field, .. }) if field == "node_count"
        ));
    }

    #[test]
    fn explicit_attackers_and_auto_timeout() {
        let cfg = &parse("attacker_ids = 3, 7\nack_timeout = auto\npermutation = random\n").unwrap()[0];
        assert_eq!(cfg.attackers, Attackers::Explicit(vec![NodeId(3), NodeId(7)]));
        assert_eq!(cfg.ack_timeout, AckTimeout::Auto);
        assert_eq!(cfg.permutation, PermutationPolicy::RandomDerangement);
        let bad = parse("node_count = 5\nattacker_ids = 3, 9\n");
        assert!(matches!(bad, Err(ConfigError::Invalid(v)) if v[0].field == "attacker_ids"));
    }

    #[test]
    fn attacker_count_must_leave_honest_nodes() {
        assert!(matches!(
            parse("node_count = 5\nattackers = 4\n"),
            Err(ConfigError::Invalid(v)) if v[0].field == "attackers"
        ));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = &parse("  # header\n\nseed = 9   # trailing\n").unwrap()[0];
        assert_eq!(cfg.seed, 9);
    }
}
