use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command as Proc, Output};

use ptdyson::{run, Command, ScenarioConfig};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn ptdyson(args: &[&str], config: &Path, out: &Path, workers: Option<&str>) -> Output {
    let mut cmd = Proc::new(env!("CARGO_BIN_EXE_ptdyson"));
    cmd.args(args).arg("--config").arg(config).arg("--out-dir").arg(out);
    if let Some(w) = workers {
        cmd.env("PTDYSON_WORKERS", w);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Setup A with a short window so the CLI tests stay quick.
fn short_setup_a(dir: &Path) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(scenario("setup_a.json")).unwrap()).unwrap();
    v["time"] = serde_json::json!({ "start": 0.0, "end": 2.0, "samples": 11 });
    let path = dir.join("short_a.json");
    fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn classify_reports_broken_regime() {
    let out = tempfile::tempdir().unwrap();
    let o = ptdyson(&["classify"], &scenario("setup_b.json"), out.path(), None);
    let text = stdout(&o);
    assert!(text.contains("regime=Broken delta=-1.0"), "{text}");
    assert!(out.path().join("classify.csv").exists());
    let report = fs::read_to_string(out.path().join("classify_report.txt")).unwrap();
    assert_eq!(report, text);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn static_map_outside_domain_fails() {
    let out = tempfile::tempdir().unwrap();
    let o = ptdyson(&["static"], &scenario("setup_b.json"), out.path(), None);
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(out.path().join("static_report.txt")).unwrap();
    assert!(report.contains("[FAIL] static-map-domain"));
    assert!(report.contains("NotInUnbrokenRegime"));
}

#[test]
fn verify_algebra_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = ptdyson(&["verify-algebra"], &scenario("setup_a.json"), out.path(), None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS] table [")).count(), 45);
    assert!(text.contains("[PASS] jacobi"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"model": {"m": 1, "omega_x": 1, "omega_y": 2, "lambda": 1}, "colour": 3}"#).unwrap();
    let o = ptdyson(&["classify"], &path, dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    fs::write(&path, r#"{"model": {"m": -1, "omega_x": 1, "omega_y": 2, "lambda": 1}}"#).unwrap();
    assert_eq!(ptdyson(&["classify"], &path, dir.path(), None).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(ptdyson(&["classify"], &missing, dir.path(), None).status.code(), Some(2));
}

#[test]
fn solve_map_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = short_setup_a(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = ptdyson(&["solve-map", "--quiet"], &cfg_path, &a, None);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    ptdyson(&["solve-map", "--quiet"], &cfg_path, &b, None);

    let csv = fs::read_to_string(a.join("solve_map.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("solve_map.csv")).unwrap());
    assert!(csv.starts_with(
        "t,alpha_minus,theta_plus,alpha_plus,theta_minus,M_plus,M_minus,omega_plus_sq,omega_minus_sq,g,antiherm_residual,metric_min_eig\n"
    ));
    assert_eq!(csv.lines().count(), 12);

    // the library call produces the same rows
    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    let direct = run(Command::SolveMap, &cfg);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(rows, direct.table.rows);
    let t_last: f64 = rows[10][0].parse().unwrap();
    assert_eq!(t_last, 2.0);
}

#[test]
fn sweep_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (one, three) = (dir.path().join("w1"), dir.path().join("w3"));
    let o1 = ptdyson(&["sweep"], &scenario("sweep_a.json"), &one, Some("1"));
    let o3 = ptdyson(&["sweep"], &scenario("sweep_a.json"), &three, Some("3"));
    assert_eq!(o1.status.code(), Some(0), "{}", stdout(&o1));
    assert_eq!(o3.status.code(), Some(0));
    let a = fs::read(one.join("sweep.csv")).unwrap();
    assert_eq!(a, fs::read(three.join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 42);
}
