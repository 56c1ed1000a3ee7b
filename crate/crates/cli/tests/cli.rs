use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aomsr() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aomsr"));
    c.env_remove("AOMSR_SEED");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL: &str = "\
scenario_id = small
protocol = aodv, aomsr
node_count = 12
max_speed = 5
pause_time = 2
sim_time = 20
area_width = 600
area_height = 600
attackers = 1
seed = 3
repetitions = 2
";

const GOLDEN_HEADER: &str = "scenario_id,seed,protocol,nodes,max_speed,k,attackers,data_sent,data_received,delivery_ratio,throughput_bps,ro_pct,detections,false_positives";

#[test]
fn csv_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = aomsr().arg("run").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(GOLDEN_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    let seeds: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["3", "4", "3", "4"]);
    assert!(rows[0].starts_with("small,3,aodv,12,5,3,1,"));
    assert!(rows[2].starts_with("small,3,aomsr,"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let mut outputs = Vec::new();
    for (i, parallel) in ["1", "3"].iter().enumerate() {
        let csv = dir.path().join(format!("out{i}.csv"));
        let traces = dir.path().join(format!("traces{i}"));
        let out = aomsr()
            .args(["run"])
            .arg(&cfg)
            .arg("--out")
            .arg(&csv)
            .arg("--trace")
            .arg(&traces)
            .args(["--parallel", parallel])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let mut logs: Vec<(String, Vec<u8>)> = fs::read_dir(&traces)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        logs.sort();
        outputs.push((fs::read(&csv).unwrap(), logs));
    }
    assert_eq!(outputs[0].1.len(), 4);
    assert!(outputs[0].1.iter().all(|(_, bytes)| bytes.starts_with(b"{\"rec\":\"header\"")));
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn invalid_config_names_the_field_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "node_count = 2\ndelta = -0.5\n");
    for cmd in ["run", "validate"] {
        let out = aomsr().arg(cmd).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        let err = stderr(&out);
        assert!(err.contains("node_count ≥ 3"), "{err}");
        assert!(err.contains("delta"), "{err}");
    }
}

#[test]
fn syntax_and_unknown_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text, needle) in [
        ("unknown.cfg", "nodes = 5\n", "unknown key `nodes`"),
        ("syntax.cfg", "node_count 5\n", "line 1"),
        ("both.cfg", "attackers = 1\nattacker_ids = 3\n", "mutually exclusive"),
        ("value.cfg", "protocol = dsr\n", "protocol"),
    ] {
        let cfg = write_config(dir.path(), name, text);
        let out = aomsr().arg("validate").arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert!(stderr(&out).contains(needle), "{name}: {}", stderr(&out));
    }
    let out = aomsr().args(["run", "/nonexistent/none.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unusable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", "sim_time = 2\nnode_count = 5\n");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = aomsr().arg("run").arg(&cfg).arg("--trace").arg(&blocker).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = aomsr()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("missing/dir/out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_from_environment_applies_when_file_sets_none() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", "sim_time = 2\nnode_count = 5\n");
    let out = aomsr().env("AOMSR_SEED", "41").arg("run").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split(',').nth(1), Some("41"));

    let cfg = write_config(dir.path(), "t.cfg", "sim_time = 2\nnode_count = 5\nseed = 7\n");
    let out = aomsr().env("AOMSR_SEED", "41").arg("run").arg(&cfg).output().unwrap();
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split(',').nth(1), Some("7"));
}

#[test]
fn table2_prints_the_grid() {
    let out = aomsr().arg("table2").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let row = |p: &str| -> Vec<String> {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(p))
            .unwrap()
            .split_whitespace()
            .skip(1)
            .map(String::from)
            .collect()
    };
    assert_eq!(row("1")[9], "9.09");
    assert_eq!(row("2")[1], "50.00");
    assert_eq!(row("2")[0], "-NA-");
    assert_eq!(row("3")[..2], ["-NA-", "-NA-"]);
    assert!(row("AACK").iter().all(|v| v == "66.67"));
    assert!(text.contains("published value 42.55"));

    let out = aomsr().args(["table2", "--csv"]).output().unwrap();
    let csv = stdout(&out);
    assert!(csv.starts_with("p,k,ro_pct,annotation\n"));
    assert!(csv.contains("\n1,10,9.09,\n"));
    assert!(csv.contains("\n3,1,-NA-,\n"));
    assert!(csv.contains("\nAACK,1,66.67,\n"));
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(root).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "cfg") {
            n += 1;
            let out = aomsr().arg("validate").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), stderr(&out));
            assert!(stdout(&out).starts_with("ok: "));
        }
    }
    assert!(n >= 3);
}
