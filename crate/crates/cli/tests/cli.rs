use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nwav(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nwav"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().last().expect("summary line");
    serde_json::from_str(line).expect("summary is JSON")
}

#[test]
fn classify_reports_case_iv() {
    let dir = tempfile::tempdir().unwrap();
    let o = nwav(&["classify", "--alpha", "2.5", "--beta", "2.8", "--mu-beta", "-0.05"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&o)["case"], "IV");
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
}

#[test]
fn classify_other_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nwav(&["classify", "--alpha", "2.5", "--beta", "2.8", "--mu-beta", "0.05"], dir.path());
    assert_eq!(summary(&o)["case"], "III");
    let o = nwav(&["classify", "--alpha", "1.5", "--beta", "2.5", "--mu-beta", "0.05"], dir.path());
    assert_eq!(summary(&o)["case"], "II");
}

#[test]
fn solve_global_without_baseline_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = nwav(&["solve-global", "--points", "16", "--box", "8", "--mu-beta", "-0.01"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing baseline record baseline-g2.5"), "{err}");
    assert!(err.contains("nwav baseline"), "{err}");
}

#[test]
fn fibering_scan_writes_two_critical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = nwav(
        &["fibering-scan", "--alpha", "2.5", "--beta", "2.8", "--mu-beta", "-0.05", "--triple", "1,4,1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&o);
    assert_eq!(s["critical_points"], 2);
    assert_eq!(s["kinds"][0], "local_max");
    assert_eq!(s["kinds"][1], "local_min");
    let csv = std::fs::read_to_string(dir.path().join("fibering/critical_points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("kind,s,g,g1,g2"));

    // Every sign change of g' in the dense scan lies next to a reported root.
    let scan = std::fs::read_to_string(dir.path().join("fibering/scan.csv")).unwrap();
    let rows: Vec<Vec<f64>> = scan
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let roots: Vec<f64> = s["s"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mut changes = 0;
    for w in rows.windows(2) {
        if w[0][2].signum() != w[1][2].signum() {
            changes += 1;
            assert!(roots.iter().any(|&r| w[0][0] <= r && r <= w[1][0]));
        }
    }
    assert_eq!(changes, 2);
}

#[test]
fn empty_sweep_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nwav(&["sweep", "--axis", "mass", "--values", ""], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = nwav(&["sweep", "--axis", "mass"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nwav(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(nwav(&["classify", "--gamma", "2"], dir.path()).status.code(), Some(1));
    assert_eq!(nwav(&["sweep", "--axis", "gamma", "--values", "1"], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dynamics": {"dt": -1.0}}"#).unwrap();
    let o = nwav(&["baseline", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = nwav(&["classify", "--config", dir.path().join("missing.json").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn baseline_then_local_on_a_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--points", "16", "--box", "8"];
    let mut args = vec!["baseline"];
    args.extend(grid);
    let o = nwav(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["baselines"].as_array().unwrap().len(), 2);
    for b in s["baselines"].as_array().unwrap() {
        assert!(b["m_infty"].as_f64().unwrap() > 0.0);
        assert!(b["saturation"].as_f64().unwrap().abs() < 1e-3);
    }
    let records = std::fs::read_dir(dir.path().join("baselines")).unwrap().count();
    assert_eq!(records, 4, "two records and two fields");

    // Re-running reproduces scalars bit-identically.
    let again = summary(&nwav(&args, dir.path()));
    assert_eq!(again["baselines"], s["baselines"]);

    let mut args = vec!["solve-local", "--mu-beta", "-0.01"];
    args.extend(grid);
    let o = nwav(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["branch"], "local");
    assert!(s["E"].as_f64().unwrap() > 0.0);
    assert!(s["lambda"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("local/solution.nwav").exists());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("local/report.json")).unwrap()).unwrap();
    assert_eq!(report["solution_file"], "solution.nwav");
}
