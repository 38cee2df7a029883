use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hetsync(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsync"))
        .args(args)
        .current_dir(dir)
        .env_remove("HETSYNC_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const EXPERIMENT: &str = r#"{
    "cluster": {"iter_ticks": [2, 5]},
    "strategies": [{"kind": "bsp"}, {"kind": "ssp", "stale_threshold": 1}, {"kind": "load_balanced", "staleness_bound": 4}],
    "task": {"examples": 200, "batch_size": 8},
    "horizon_ticks": 120,
    "eval_every_ticks": 20,
    "repeat_seeds": [1, 2],
    "output_dir": "out",
    "tick_ms": 100
}"#;

#[test]
fn solve_prints_the_barrier() {
    let dir = TempDir::new().unwrap();
    let cluster = write(
        dir.path(),
        "c.json",
        r#"{"iter_ticks": [2, 3], "staleness_bound": 3}"#,
    );
    let out = hetsync(&["solve", &cluster], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["barrier_ticks"], 6);
    assert_eq!(v["local_steps"], serde_json::json!([3, 2]));
    assert_eq!(v["max_wait_ticks"], 0);
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let infeasible = write(
        dir.path(),
        "i.json",
        r#"{"iter_ticks": [1, 10], "staleness_bound": 5}"#,
    );
    let out = hetsync(&["solve", &infeasible], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("is 9"));

    let missing_m = write(dir.path(), "m.json", r#"{"iter_ticks": [2, 3]}"#);
    assert_eq!(
        hetsync(&["solve", &missing_m], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        hetsync(&["solve", "absent.json"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(hetsync(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn simulate_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "e.json", EXPERIMENT);
    let out = hetsync(&["simulate", &config], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out_dir = dir.path().join("out");
    for label in ["bsp", "ssp_s1", "load_balanced_m4"] {
        for seed in [1, 2] {
            let csv = fs::read_to_string(out_dir.join(format!("metrics_{label}_seed{seed}.csv")))
                .unwrap();
            let mut lines = csv.lines();
            assert_eq!(
                lines.next(),
                Some("strategy,seed,tick,loss,accuracy,iters,idle_frac")
            );
            let rows: Vec<&str> = lines.collect();
            // Ticks 0, 20, ..., 120.
            assert_eq!(rows.len(), 7);
            assert!(rows[0].starts_with(&format!("{label},{seed},0,")));
            assert!(rows[6].starts_with(&format!("{label},{seed},120,")));
            let log =
                fs::read_to_string(out_dir.join(format!("events_{label}_seed{seed}.log"))).unwrap();
            assert!(log.starts_with("0,0,iter_start\n"));
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let strategies = summary["strategies"].as_array().unwrap();
    assert_eq!(strategies.len(), 3);
    assert_eq!(strategies[2]["label"], "load_balanced_m4");
    assert_eq!(strategies[2]["mean_idle_fraction"], 0.0);
    assert_eq!(strategies[0]["runs"].as_array().unwrap().len(), 2);
    let per_ktick = strategies[2]["mean_throughput_iters_per_ktick"]
        .as_f64()
        .unwrap();
    let per_hour = strategies[2]["mean_throughput_iters_per_hour"]
        .as_f64()
        .unwrap();
    assert!((per_hour - per_ktick * 36.0).abs() < 1e-9 * per_hour);
}

#[test]
fn seed_override_and_output_dir() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "e.json", EXPERIMENT);
    let out = Command::new(env!("CARGO_BIN_EXE_hetsync"))
        .args(["simulate", &config, "--output-dir", "elsewhere"])
        .current_dir(dir.path())
        .env("HETSYNC_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    let files: Vec<String> = fs::read_dir(dir.path().join("elsewhere"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(files.contains(&"metrics_bsp_seed7.csv".to_string()));
    assert!(!files.iter().any(|f| f.contains("seed1")));

    let bad = Command::new(env!("CARGO_BIN_EXE_hetsync"))
        .args(["simulate", &config])
        .current_dir(dir.path())
        .env("HETSYNC_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_error_exit_codes() {
    let dir = TempDir::new().unwrap();
    let infeasible = EXPERIMENT.replace(r#""staleness_bound": 4"#, r#""staleness_bound": 1"#);
    let config = write(dir.path(), "i.json", &infeasible);
    let out = hetsync(&["simulate", &config], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out").exists());

    fs::write(dir.path().join("blocker"), "").unwrap();
    let config = write(dir.path(), "e.json", EXPERIMENT);
    let out = hetsync(
        &["simulate", &config, "--output-dir", "blocker/sub"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));

    let config = write(
        dir.path(),
        "u.json",
        &EXPERIMENT.replace("horizon_ticks", "horizon"),
    );
    assert_eq!(
        hetsync(&["simulate", &config], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn sweep_writes_csv_with_infeasible_rows() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "e.json", EXPERIMENT);
    let out = hetsync(
        &["sweep", &config, "--param", "M", "--from", "1", "--to", "4"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let file = fs::read_to_string(dir.path().join("out/sweep_m.csv")).unwrap();
    assert_eq!(stdout, file);
    let lines: Vec<&str> = file.lines().collect();
    assert_eq!(
        lines[0],
        "m,barrier_ticks,max_wait,idle_fraction,final_loss,status"
    );
    assert_eq!(lines[1], "1,,,,,infeasible");
    assert!(lines[2].starts_with("2,5,1,"));
    assert!(lines[4].starts_with("4,10,0,0,"));
    assert_eq!(lines.len(), 5);

    let bad = hetsync(
        &["sweep", &config, "--param", "H", "--from", "1", "--to", "2"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}
