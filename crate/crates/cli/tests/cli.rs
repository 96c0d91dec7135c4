use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mphy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mphy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SCENARIO: &str = r#"
phy = "bt5_1m"
scheduler = "orchestra"
env = "home"
nodes = 10
duration_s = 180
repetitions = 3
seed = 5
"#;

const SWEEP: &str = r#"
phys = ["bt5_2m", "ieee802154"]
schedulers = ["orchestra", "minimal"]
envs = ["home"]
node_counts = [10]
repetitions = 2
base_seed = 9

[scenario]
duration_s = 20
"#;

#[test]
fn simulate_writes_long_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("out");
    let o = mphy(&[
        "simulate",
        "--scenario",
        &scenario,
        "--out",
        out.to_str().unwrap(),
        "--per-run",
        "--trace",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let csv = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("phy,scheduler,env,nodes,metric,mean,std,reps_used")
    );
    assert_eq!(csv.lines().count(), 1 + 6);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for (row, line) in rows.iter().zip(csv.lines().skip(1)) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(row["phy"], fields[0]);
        assert_eq!(row["metric"], fields[4]);
        match row["mean"].as_f64() {
            Some(m) => assert_eq!(m.to_string(), fields[5]),
            None => assert_eq!(fields[5], ""),
        }
    }
    let per_run = fs::read_to_string(out.join("per_run.csv")).unwrap();
    assert_eq!(per_run.lines().count(), 1 + 3);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l.contains(",delivery,")));
}

#[test]
fn simulate_without_out_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", SCENARIO);
    let o = mphy(&["simulate", "--scenario", &scenario]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json[0]["metric"], "pdr");
    assert_eq!(json[0]["reps_used"], 3);
}

#[test]
fn sweep_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", SWEEP);
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "3"), ("c", "1")] {
        let out = dir.path().join(name);
        let o = mphy(&[
            "sweep",
            "--spec",
            &spec,
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
            "--per-run",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(
            ["aggregate.csv", "aggregate.json", "per_run.csv"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn base_seed_changes_results_not_schema() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SWEEP);
    let b = write(
        dir.path(),
        "b.toml",
        &SWEEP.replace("base_seed = 9", "base_seed = 10"),
    );
    let run = |spec: &str| String::from_utf8(mphy(&["sweep", "--spec", spec]).stdout).unwrap();
    let (x, y) = (run(&a), run(&b));
    assert_ne!(x, y);
    let keys = |s: &str| -> Vec<(String, String)> {
        let v: serde_json::Value = serde_json::from_str(s).unwrap();
        v.as_array()
            .unwrap()
            .iter()
            .map(|r| (r["phy"].to_string(), r["metric"].to_string()))
            .collect()
    };
    assert_eq!(keys(&x), keys(&y));
}

/// The column layout and the metric rows of one cell are pinned.
#[test]
fn output_schema_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("out");
    assert!(mphy(&[
        "simulate",
        "--scenario",
        &scenario,
        "--out",
        out.to_str().unwrap(),
        "--per-run"
    ])
    .status
    .success());
    let mut schema = String::new();
    let csv = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    for line in csv.lines() {
        let f: Vec<&str> = line.split(',').collect();
        schema.push_str(&f[..5].join(","));
        schema.push('\n');
    }
    let per_run = fs::read_to_string(out.join("per_run.csv")).unwrap();
    schema.push_str(per_run.lines().next().unwrap());
    schema.push('\n');
    let golden = include_str!("golden/schema.txt");
    assert_eq!(schema, golden);
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        SCENARIO.replace("nodes = 10", "nodes = 1"),
        SCENARIO.replace("orchestra", "tdma"),
        format!("{SCENARIO}\nbogus = 1\n"),
        SCENARIO.replace("nodes = 10", "nodes = 80"),
    ];
    for (i, body) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("bad{i}.toml"), body);
        let o = mphy(&["simulate", "--scenario", &p]);
        assert_eq!(
            o.status.code(),
            Some(1),
            "case {i}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let o = mphy(&[
        "simulate",
        "--scenario",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn force_allows_unusual_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = SCENARIO
        .replace("nodes = 10", "nodes = 4")
        .replace("repetitions = 3", "repetitions = 1");
    let p = write(dir.path(), "s.toml", &body);
    assert_eq!(mphy(&["simulate", "--scenario", &p]).status.code(), Some(1));
    assert!(mphy(&["simulate", "--scenario", &p, "--force"])
        .status
        .success());
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "s.toml",
        &SCENARIO.replace("repetitions = 3", "repetitions = 1"),
    );
    let blocker = write(dir.path(), "file", "");
    let o = mphy(&[
        "simulate",
        "--scenario",
        &p,
        "--out",
        &format!("{blocker}/sub"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn topology_round_trips_through_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pos.csv");
    let o = mphy(&[
        "topology",
        "--nodes",
        "20",
        "--env",
        "home",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("node_id,x,y"));
    assert_eq!(text.lines().count(), 21);
    let body = format!(
        "{}topology_file = {:?}\n",
        SCENARIO.replace("nodes = 10", "nodes = 20"),
        csv.to_str().unwrap()
    );
    let p = write(dir.path(), "s.toml", &body);
    assert!(mphy(&["simulate", "--scenario", &p]).status.success());
    assert_eq!(
        mphy(&[
            "topology",
            "--nodes",
            "1",
            "--env",
            "home",
            "--out",
            csv.to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        mphy(&[
            "topology",
            "--nodes",
            "5",
            "--env",
            "space",
            "--out",
            csv.to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );
}
