use std::path::Path;
use std::process::{Command, Output};

fn finsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes a panel and caches its returns in `out`.
fn prepare(dir: &Path, calm: &str, crash: &str) -> String {
    let prices = dir.join("prices.csv");
    let out = dir.join("out");
    let o = finsync(&[
        "synth",
        "--n-stocks",
        "8",
        "--calm-days",
        calm,
        "--crash-days",
        crash,
        "--seed",
        "3",
        "--output",
        p(&prices),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = finsync(&["ingest", "--input", p(&prices), "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.to_str().unwrap().to_owned()
}

#[test]
fn ingest_reports_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    std::fs::write(
        &csv,
        "date,A,B,C\n\
         2020-01-01,1,2,3\n2020-01-02,1.1,2.1,3.1\n2020-01-03,1.2,2.0,3.3\n\
         2020-01-06,1.1,2.2,3.2\n2020-01-07,1.3,2.3,3.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = finsync(&["ingest", "--input", p(&csv), "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "N=3 T=5 dropped=0");
    assert!(out.join("returns.csv").exists());
    let sidecar = std::fs::read_to_string(out.join("returns.csv.config.json")).unwrap();
    assert!(sidecar.contains("\"stage\": \"ingest\""));
}

#[test]
fn bad_path_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = finsync(&[
        "ingest",
        "--input",
        "/definitely/not/here.csv",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("here.csv"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        finsync(&["analyze", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(
        finsync(&["analyze", "--lambda", "strong"]).status.code(),
        Some(1)
    );
    assert_eq!(finsync(&["analyze", "--width", "2"]).status.code(), Some(1));
    assert_eq!(finsync(&["ingest"]).status.code(), Some(1));
    assert_eq!(finsync(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_output_round_trips_without_drops() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("nested/prices.csv");
    let o = finsync(&["synth", "--n-stocks", "5", "--output", p(&prices)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = finsync(&["ingest", "--input", p(&prices), "--out-dir", p(dir.path())]);
    assert_eq!(stdout(&o).trim(), "N=5 T=601 dropped=0");
}

#[test]
fn oversized_window_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), "56", "56");
    let o = finsync(&["analyze", "--out-dir", &out, "--width", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too short"), "{}", stderr(&o));
    assert!(!Path::new(&out).join("metrics.csv").exists());
    assert!(!Path::new(&out).join("sync.csv").exists());
}

#[test]
fn too_few_disjoint_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), "56", "56");
    // 168 returns with width 40 leave only 4 disjoint windows
    let o = finsync(&[
        "analyze",
        "--out-dir",
        &out,
        "--width",
        "40",
        "--t-max",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = finsync(&["regress", "--out-dir", &out, "--width", "40"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("insufficient samples"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn regress_rejects_mismatched_window_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), "56", "56");
    let o = finsync(&["analyze", "--out-dir", &out, "--t-max", "5"]);
    assert!(o.status.success());
    let o = finsync(&["regress", "--out-dir", &out, "--width", "30"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn reports_carry_estimator_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), "100", "100");
    let o = finsync(&[
        "analyze",
        "--out-dir",
        &out,
        "--t-max",
        "10",
        "--trajectories",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("windows=273"));
    assert!(Path::new(&out)
        .join("trajectories/window_000000.csv")
        .exists());
    for name in ["huber", "bisquare"] {
        let o = finsync(&["regress", "--out-dir", &out, "--estimator", name]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(Path::new(&out).join("fit_report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["estimator"], name);
        assert_eq!(report["robust"]["estimator"], name);
        assert_eq!(report["ols"]["estimator"], "ols");
        assert!(Path::new(&out).join("normal_plot.csv").exists());
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare(dir.path(), "56", "56");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "width = 40\nt_max = 5\ndump_networks = binary\n").unwrap();
    let o = finsync(&[
        "analyze",
        "--config",
        p(&cfg),
        "--out-dir",
        &out,
        "--width",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&format!("windows={}", 168 - 50 + 1)));
    let sidecar = std::fs::read_to_string(Path::new(&out).join("metrics.csv.config.json")).unwrap();
    assert!(sidecar.contains("\"width\": 50"));
    assert!(Path::new(&out).join("networks.bin").exists());
}
