//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (bypassing output capture) before asserting.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use aomsr_core::aodv::MultipathRouteEntry;
use aomsr_core::aomsr::{
    generate_permutation, DestinationDht, MessageType, PBAckHeader, PbaOutcome, Permutation,
    PermutationPolicy, SelectedPath, SenderDht,
};
use aomsr_core::config::{Attackers, Protocol, ScenarioConfig, ScenarioFile};
use aomsr_core::engine::{RngStreams, SimTime};
use aomsr_core::runner::{plan_file, render_csv, ResultRow};
use aomsr_core::sim::{run_scenario, FlowSpec, Placement, RunOutcome, Scenario};
use aomsr_core::topology::{random_placement, NodeId};
use aomsr_core::trace::{TraceRecord, TraceSink, TrafficClass};
use aomsr_core::generate_table2;
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{ladder, ladder_node};

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let ok = pass && elapsed <= limit;
    let mark = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "[{mark}] criterion {id} {name}: {detail} ({elapsed:.2?}, limit {limit:?})"
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
    assert!(elapsed <= limit, "criterion {id} ({name}) exceeded {limit:?}: {elapsed:?}");
}

fn records(out: &RunOutcome) -> Vec<TraceRecord> {
    out.trace
        .memory_text()
        .expect("memory sink")
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid trace line"))
        .collect()
}

fn tx_count(recs: &[TraceRecord], want: TrafficClass, relay_only: bool) -> u64 {
    recs.iter()
        .filter(|r| {
            matches!(r, TraceRecord::Tx { class, relay, .. }
                if *class == want && (!relay_only || *relay))
        })
        .count() as u64
}

// Published grid, rows p = 1..3, columns k = 1..10; None where p > k.
const PUBLISHED: [[Option<f64>; 10]; 3] = [
    [
        Some(50.00),
        Some(33.33),
        Some(25.0),
        Some(20.0),
        Some(16.66),
        Some(14.28),
        Some(12.5),
        Some(11.11),
        Some(10.0),
        Some(9.09),
    ],
    [
        None,
        Some(50.0),
        Some(40.0),
        Some(33.33),
        Some(28.57),
        Some(25.0),
        Some(22.22),
        Some(20.0),
        Some(18.18),
        Some(16.66),
    ],
    [
        None,
        None,
        Some(50.0),
        Some(42.55),
        Some(37.5),
        Some(33.33),
        Some(30.0),
        Some(27.27),
        Some(25.0),
        Some(23.07),
    ],
];

#[test]
fn criterion_1_overhead_table() {
    let start = Instant::now();
    let table = generate_table2();
    let csv = table.render_csv();
    let text = table.render_text();
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    let mut annotated = BTreeSet::new();
    let mut aack = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.splitn(4, ',').collect();
        let k: usize = cols[1].parse().unwrap();
        if cols[0] == "AACK" {
            aack.push(cols[2].parse::<f64>().unwrap());
            continue;
        }
        let p: usize = cols[0].parse().unwrap();
        if !cols[3].is_empty() {
            annotated.insert((p, k));
        }
        match (PUBLISHED[p - 1][k - 1], cols[2]) {
            (None, "-NA-") => {}
            (Some(published), v) if v != "-NA-" => {
                let ours: f64 = v.parse().unwrap();
                let oracle = 100.0 * p as f64 / (p + k) as f64;
                if (ours - oracle).abs() > 0.005 {
                    problems.push(format!("({p},{k}) {ours} vs formula {oracle:.3}"));
                }
                worst = worst.max((ours - published).abs());
            }
            (want, got) => problems.push(format!("({p},{k}) expected {want:?}, got {got}")),
        }
    }
    let expected_notes: BTreeSet<(usize, usize)> = [(3, 4), (3, 10)].into_iter().collect();
    let aack_ok = aack.len() == 10 && aack.iter().all(|v| (v - 66.67).abs() <= 0.01);
    let text_ok = text.contains("published value 42.55") && text.contains("published value 23.07");
    let pass = problems.is_empty()
        && worst <= 0.35
        && annotated == expected_notes
        && aack_ok
        && text_ok;
    report(
        1,
        "overhead table",
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "max |delta| vs published {worst:.3} pp, annotated {annotated:?}, AACK {:?}, issues {problems:?}",
            aack.first()
        ),
    );
}

#[test]
fn criterion_2_transaction_counts() {
    let start = Instant::now();
    let mut issues = Vec::new();
    let mut cases = 0;
    for k in 2..=4u32 {
        for n in 2..=6u32 {
            cases += 1;
            let out = run_scenario(ladder(k, n, None, Protocol::Aomsr), TraceSink::Memory(vec![]))
                .unwrap();
            let recs = records(&out);
            let rounds = out.report.rounds;
            let complete = out.flows[0].rounds.values().all(|&(np, got)| np == got);
            let pba = tx_count(&recs, TrafficClass::Pba, true);
            if rounds == 0 || !complete || pba != rounds * u64::from(k * n) {
                issues.push(format!(
                    "k={k} n={n}: {pba} PBA relays over {rounds} rounds (complete {complete})"
                ));
            }

            let out = run_scenario(
                ladder(k, n, Some((0, 0)), Protocol::Aomsr),
                TraceSink::Memory(vec![]),
            )
            .unwrap();
            let recs = records(&out);
            let attacker = ladder_node(n, 0, 0);
            let checks = tx_count(&recs, TrafficClass::PathCheck, true);
            let per_path_ack = u64::from(n);
            let pair = per_path_ack + checks;
            let baseline = 3 * u64::from(n);
            if out.report.accused != BTreeSet::from([attacker])
                || checks > u64::from(n)
                || 3 * pair > 2 * baseline
            {
                issues.push(format!(
                    "k={k} n={n}: accused {:?}, {checks} path-check relays, 2n measured {pair} vs 3n {baseline}",
                    out.report.accused
                ));
            }
        }
    }
    report(
        2,
        "transaction counts",
        issues.is_empty(),
        start.elapsed(),
        Duration::from_secs(10),
        &format!("{cases} (k, n) ladders; issues {issues:?}"),
    );
}

#[test]
fn criterion_3_detection_soundness() {
    let start = Instant::now();
    let base = ScenarioConfig {
        max_speed: 0.0,
        k_max: 3,
        sim_time: 30.0,
        ..ScenarioConfig::default()
    };
    let mut qualifying = 0;
    let mut correct = 0;
    let mut misses = Vec::new();
    let mut seed = 0u64;
    while qualifying < 100 && seed < 5000 {
        seed += 1;
        let mut s = Scenario::from_config(&base, seed);
        let n = s.node_count;
        let pos = random_placement(n as usize, s.area, &RngStreams::new(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u32> = (0..n).collect();
        let ends: Vec<u32> = ids.choose_multiple(&mut rng, 2).copied().collect();
        let (src, dst) = (NodeId(ends[0]), NodeId(ends[1]));
        // A black hole next to the destination is indistinguishable from an
        // honest last hop, so it is placed out of the destination's range.
        let range = s.radio.range;
        let candidates: Vec<u32> = ids
            .iter()
            .copied()
            .filter(|&i| i != src.0 && i != dst.0)
            .filter(|&i| pos[i as usize].distance(pos[dst.index()]) > range)
            .collect();
        let Some(&attacker) = candidates.choose(&mut rng) else {
            continue;
        };
        let attacker = NodeId(attacker);
        s.placement = Placement::Explicit(pos);
        s.flows = FlowSpec::Explicit(vec![(src, dst)]);
        s.attackers = Attackers::Explicit(vec![attacker]);
        let out = run_scenario(s, TraceSink::None).unwrap();
        let Some(first) = out.flows[0].selections.first() else {
            continue;
        };
        let on = first.iter().filter(|p| p.contains(&attacker)).count();
        if first.len() < 2 || on != 1 {
            continue;
        }
        qualifying += 1;
        if out.report.accused == BTreeSet::from([attacker]) {
            correct += 1;
        } else {
            misses.push((seed, attacker, out.report.accused.clone()));
        }
    }

    let mut false_positives = 0;
    for seed in 1..=100 {
        let out = run_scenario(Scenario::from_config(&base, seed), TraceSink::None).unwrap();
        false_positives += out.report.false_positives + out.report.accused.len() as u64;
    }
    let pass = qualifying == 100 && correct == 100 && false_positives == 0;
    report(
        3,
        "detection soundness",
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        &format!(
            "{correct}/{qualifying} attacker runs accused exactly the attacker ({seed} seeds tried); \
             {false_positives} accusations in 100 attacker-free runs; misses {misses:?}"
        ),
    );
}

#[test]
fn criterion_4_derangements() {
    let start = Instant::now();
    let mut bad = Vec::new();
    for np in 2..=8usize {
        for policy in [PermutationPolicy::RandomDerangement, PermutationPolicy::BackwardShift] {
            for seed in 0..1000u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let perm = generate_permutation(np, policy, &mut rng).unwrap();
                let v = perm.as_slice();
                let fixed = v.iter().enumerate().any(|(i, &p)| usize::from(p) == i + 1);
                let mut sorted = v.to_vec();
                sorted.sort_unstable();
                let bijection = sorted == (1..=np as u8).collect::<Vec<_>>();
                if fixed || !bijection {
                    bad.push((np, seed, v.to_vec()));
                }
            }
        }
    }
    report(
        4,
        "derangement property",
        bad.is_empty(),
        start.elapsed(),
        Duration::from_secs(1),
        &format!("NP 2..=8 x 1000 seeds x 2 policies; violations {bad:?}"),
    );
}

fn star_paths(np: usize) -> Vec<SelectedPath> {
    (0..np)
        .map(|i| SelectedPath {
            number: i as u8 + 1,
            entry: MultipathRouteEntry {
                destination: NodeId(1),
                dest_seq: 1,
                hop_count: 2,
                path: vec![NodeId(0), NodeId(10 + i as u32), NodeId(1)],
                est_delay: SimTime::from_micros(4162),
            },
        })
        .collect()
}

#[test]
fn criterion_5_liveness_over_arrival_orders() {
    let start = Instant::now();
    let mut runs = 0;
    let mut issues = Vec::new();
    for np in 2..=4usize {
        let paths = star_paths(np);
        let derangements: Vec<Vec<u8>> = (1..=np as u8)
            .permutations(np)
            .filter(|p| p.iter().enumerate().all(|(i, &x)| usize::from(x) != i + 1))
            .collect();
        for d in &derangements {
            let perm = Permutation::try_from(d.clone()).unwrap();
            for order in (0..np).permutations(np) {
                runs += 1;
                let mut sender = SenderDht::new();
                let headers = sender.open_round(0, &paths, &perm).unwrap();
                let mut dest = DestinationDht::new();
                let mut acked: BTreeMap<u8, usize> = BTreeMap::new();
                let mut complete = false;
                for &i in &order {
                    let h = headers[i];
                    assert_eq!(h.message, MessageType::Data);
                    for pba in dest.process_data(&h, &paths[i].entry.path).unwrap() {
                        *acked.entry(pba.path_no).or_default() += 1;
                        let carrier = &paths[usize::from(pba.ack_path_no) - 1].entry.path;
                        let expected: Vec<NodeId> = carrier.iter().rev().copied().collect();
                        if pba.route != expected || pba.ack_path_no != perm.ack_path(pba.path_no) {
                            issues.push(format!("np={np} perm={d:?} order={order:?}: bad route"));
                        }
                        if let PbaOutcome::Credited { round_complete } =
                            sender.receive_pba(0, pba.path_no, pba.ack_path_no)
                        {
                            complete |= round_complete;
                        }
                    }
                }
                let once = acked.len() == np && acked.values().all(|&c| c == 1);
                if !once || !complete {
                    issues.push(format!(
                        "np={np} perm={d:?} order={order:?}: acks {acked:?}, complete {complete}"
                    ));
                }
            }
        }
    }
    report(
        5,
        "liveness oracle",
        issues.is_empty(),
        start.elapsed(),
        Duration::from_secs(5),
        &format!("{runs} (derangement, arrival order) cases; issues {issues:?}"),
    );
}

#[test]
fn criterion_6_attack_impact() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, n, at) in [(3, 4, 0), (4, 4, 0), (3, 5, 1), (2, 4, 0)] {
        let attacker = ladder_node(n, 0, at);
        let aodv = run_scenario(ladder(k, n, Some((0, at)), Protocol::Aodv), TraceSink::None)
            .unwrap();
        let victim = &aodv.flows[0];
        let aodv_ok = victim.sent > 0 && victim.received == 0;

        let aomsr = run_scenario(ladder(k, n, Some((0, at)), Protocol::Aomsr), TraceSink::None)
            .unwrap();
        let f = &aomsr.flows[0];
        let alarm_round = f.first_alarm_round.unwrap_or(u32::MAX);
        let before_ok = f
            .rounds
            .range(..alarm_round)
            .all(|(_, &(np, got))| u32::from(got) * u32::from(np) >= u32::from(np - 1) * u32::from(np));
        let after_ok = f.rounds.range(alarm_round..).all(|(_, &(np, got))| got == np);
        let rerouted = f
            .selections
            .last()
            .is_some_and(|s| s.iter().all(|p| !p.contains(&attacker)));
        let accused = aomsr.report.accused == BTreeSet::from([attacker]);
        let ok = aodv_ok && before_ok && after_ok && rerouted && accused && f.first_alarm_round.is_some();
        pass &= ok;
        lines.push(format!(
            "k={k} n={n}: AODV {}/{}, AOMSR {}/{} (alarm before round {alarm_round}, rerouted {rerouted})",
            victim.received, victim.sent, f.received, f.sent
        ));
    }
    report(
        6,
        "attack impact",
        pass,
        start.elapsed(),
        Duration::from_secs(30),
        &lines.join("; "),
    );
}

const SWEEP: &str = "\
scenario_id = constant-mobility
protocol = aodv, aomsr
node_count = 10, 20, 30, 40, 50
max_speed = 10
pause_time = 30
sim_time = 300
attackers = 1
seed = 1
repetitions = 5
";

/// Path-check transmissions against the checked round's data transmissions.
fn detection_round_overhead(recs: &[TraceRecord]) -> Option<f64> {
    let round = recs.iter().find_map(|r| match r {
        TraceRecord::Suspect { round, .. } => Some(*round),
        _ => None,
    })?;
    let checks = tx_count(recs, TrafficClass::PathCheck, false) as f64;
    let data = recs
        .iter()
        .filter(|r| {
            matches!(r, TraceRecord::Tx { class: TrafficClass::Data, hdr: Some(h), .. }
                if PBAckHeader::unpack(*h).is_ok_and(|h| h.round == round))
        })
        .count() as f64;
    Some(checks / (checks + data) * 100.0)
}

#[test]
fn criterion_7_qualitative_trends() {
    let start = Instant::now();
    let file = ScenarioFile::parse(SWEEP, ScenarioConfig::default()).unwrap();
    let runs = plan_file(&file).unwrap();
    let mut pdr: BTreeMap<(u32, Protocol), Vec<f64>> = BTreeMap::new();
    for spec in &runs {
        let out = run_scenario(spec.scenario(), TraceSink::None).unwrap();
        pdr.entry((spec.config.node_count, spec.config.protocol))
            .or_default()
            .push(out.report.delivery_ratio());
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let mut delivery_ok = true;
    let mut parts = Vec::new();
    for nodes in [10, 20, 30, 40, 50] {
        let aodv = mean(&pdr[&(nodes, Protocol::Aodv)]);
        let aomsr = mean(&pdr[&(nodes, Protocol::Aomsr)]);
        delivery_ok &= aomsr >= aodv;
        parts.push(format!("{nodes}: {aomsr:.3} vs {aodv:.3}"));
    }

    let mut detection = Vec::new();
    let mut whole = Vec::new();
    for k in 2..=6u32 {
        let out = run_scenario(
            ladder(k, 4, Some((0, 0)), Protocol::Aomsr),
            TraceSink::Memory(vec![]),
        )
        .unwrap();
        detection.push(detection_round_overhead(&records(&out)).unwrap_or(f64::NAN));
        whole.push(out.report.routing_overhead_pct());
    }
    let decreasing = detection.windows(2).all(|w| w[1] < w[0]);
    report(
        7,
        "qualitative trends",
        delivery_ok && decreasing,
        start.elapsed(),
        Duration::from_secs(600),
        &format!(
            "{} runs; mean delivery AOMSR vs AODV by node count [{}]; detection-round overhead % for k=2..6 {:?} (whole-run overhead % {:?})",
            runs.len(),
            parts.join(", "),
            detection.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            whole.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

const DETERMINISM: &str = "\
scenario_id = replay
protocol = aodv, aomsr
node_count = 20
max_speed = 10
pause_time = 5
sim_time = 60
attackers = 1
seed = 11
repetitions = 2
";

fn replay() -> (String, Vec<String>) {
    let file = ScenarioFile::parse(DETERMINISM, ScenarioConfig::default()).unwrap();
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for spec in plan_file(&file).unwrap() {
        let out = run_scenario(spec.scenario(), TraceSink::Memory(vec![])).unwrap();
        rows.push(ResultRow::new(&spec, &out.report));
        logs.push(out.trace.memory_text().unwrap());
    }
    (render_csv(&rows), logs)
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let (csv_a, logs_a) = replay();
    let (csv_b, logs_b) = replay();
    let bytes: usize = logs_a.iter().map(String::len).sum();
    let pass = csv_a == csv_b && logs_a == logs_b && !logs_a.is_empty();
    report(
        8,
        "determinism",
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        &format!("{} runs, {} CSV bytes and {bytes} log bytes compared", logs_a.len(), csv_a.len()),
    );
}
