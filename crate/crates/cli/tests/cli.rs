use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use orthoplap::fields::read_snapshot;
use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    run_env(args, out, &[])
}

fn run_env(args: &[&str], out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orthoplap"));
    cmd.args(args).arg("--set").arg(format!("out={}", out.display()));
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = ["--set", "n=[33,65]", "--set", "levels=4", "--set", "sweep_points=41"];

fn with_small<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn solve_affine_reproduces_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--set", "scenario=affine", "--set", "n=[65]"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let level = dir.path().join("affine/65/1e-2");
    let snap = read_snapshot(BufReader::new(fs::File::open(level.join("field.txt")).unwrap()), [0.0, 0.0]).unwrap();
    let grid = *snap.field.grid();
    for j in 0..grid.n() {
        for i in 0..grid.n() {
            let [x, y] = grid.coords(i, j);
            assert!((snap.field.at(i, j) - (3.0 * x - 2.0 * y + 1.0)).abs() < 1e-9);
        }
    }
    let rep: Value = serde_json::from_str(&fs::read_to_string(level.join("solve.json")).unwrap()).unwrap();
    assert_eq!(rep["converged"], true);
}

#[test]
fn solve_exact_solution_writes_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--set", "scenario=ustar_p1.5", "--set", "n=[129]"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for eps in ["1e-2", "2.5e-3", "6.25e-4", "1.5625e-4", "3.90625e-5", "9.765625e-6"] {
        let d = dir.path().join("ustar_p1.5/129").join(eps);
        assert!(d.join("field.txt").is_file(), "{eps}");
        assert!(d.join("solve.json").is_file(), "{eps}");
    }
    assert!(dir.path().join("ustar_p1.5/129/ladder.json").is_file());
}

#[test]
fn even_node_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--set", "n=[64]"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("odd"), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["solve", "--set", "scenario=oscillatory", "--set", "n=[33]", "--set", "solver.max_newton=1"],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn verify_affine_passes_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&with_small("verify", &["--set", "scenario=affine"]), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reports: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("affine/reports.json")).unwrap()).unwrap();
    let cfg = &reports["config"];
    assert_eq!(cfg["n"], serde_json::json!([33, 65]));
    assert_eq!(cfg["out"], dir.path().display().to_string());
    for r in reports["reports"].as_array().unwrap() {
        assert_eq!(r["pass"], true, "{}", r["name"]);
        assert_eq!(&r["context"]["config"], cfg, "{}", r["name"]);
    }
    assert_eq!(reports["negative_control"]["pass"], false);
    let csv = fs::read_to_string(dir.path().join("affine/summary.csv")).unwrap();
    assert!(csv.starts_with("scenario,check,n,j,lhs,rhs,ratio,tolerance,pass,expected_fail"));
    assert!(csv.lines().any(|l| l.contains(",maxmin,") && l.ends_with(",false,true")));
}

#[test]
fn tampered_negative_control_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &with_small("verify", &["--set", "scenario=affine", "--set", "negative_control_field=affine"]),
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("negative control passed"));
}

#[test]
fn verify_without_artifacts_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &with_small("verify", &["--set", "scenario=affine", "--set", "solve_then_verify=false"]),
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing artifact"), "{}", stderr(&o));
}

#[test]
fn verify_from_artifacts_matches_solve_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small("verify", &["--set", "scenario=ustar_p1.5"]);
    let first = run(&args, dir.path());
    let summary = fs::read_to_string(dir.path().join("ustar_p1.5/summary.csv")).unwrap();
    let mut again = args.clone();
    again.extend(["--set", "solve_then_verify=false"]);
    let second = run(&again, dir.path());
    assert_eq!(code(&first), code(&second));
    assert_eq!(summary, fs::read_to_string(dir.path().join("ustar_p1.5/summary.csv")).unwrap());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = with_small("verify", &["--set", "scenario=oscillatory"]);
    let oa = run_env(&args, a.path(), &[("ORTHOPLAP_THREADS", "1")]);
    let ob = run_env(&args, b.path(), &[("ORTHOPLAP_THREADS", "3")]);
    assert_eq!(code(&oa), code(&ob));
    let read = |d: &Path| fs::read_to_string(d.join("oscillatory/summary.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let bad = run_env(&args, a.path(), &[("ORTHOPLAP_THREADS", "many")]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"scenario": "affine", "n": [33], "levels": 3, "solver": {"max_newton": 20}}"#).unwrap();
    let o = run(
        &["solve", "--config", cfg.to_str().unwrap(), "--set", "levels=2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("affine/33/2.5e-3/field.txt").is_file());
    assert!(!dir.path().join("affine/33/6.25e-4").exists());
    let o = run(&["solve", "--config", dir.path().join("nope.json").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
}

fn sweep_rows(dir: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn one_point_sweep_matches_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&with_small("verify", &["--set", "scenario=ustar_p1.5"]), dir.path());
    assert!(code(&o) <= 2, "{}", stderr(&o));
    let o = run(
        &with_small("sweep", &["--set", "scenario=ustar_p1.5", "--set", "sweep_p=[1.5]"]),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = sweep_rows(dir.path());
    let reports: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ustar_p1.5/reports.json")).unwrap()).unwrap();
    let report = |name: &str| {
        reports["reports"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["name"] == name)
            .unwrap()
            .clone()
    };
    for name in ["lipschitz", "caccioppoli"] {
        // values are [coarse n, fine n]
        let verified: Vec<f64> = report(name)["context"]["values"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        for (n, v) in [("33", verified[0]), ("65", verified[1])] {
            let row = rows.iter().find(|r| &r[0] == name && &r[4] == n).unwrap();
            assert_eq!(row[7].parse::<f64>().unwrap(), v, "{name} n={n}");
        }
    }
}

#[test]
fn sweep_over_p_gives_finite_ratios_in_fixed_order() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small("sweep", &["--set", "scenario=oscillatory", "--set", "n=[65]"]);
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = sweep_rows(dir.path());
    let ps: Vec<String> = rows.iter().map(|r| r[2].to_string()).collect();
    for p in ["1.2", "1.5", "1.8"] {
        assert!(ps.iter().any(|x| x == p));
    }
    assert!(rows.iter().all(|r| r[7].parse::<f64>().unwrap().is_finite()));
    let first = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    run(&args, dir.path());
    assert_eq!(first, fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
}

#[test]
fn empty_sweep_grid_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--set", "sweep_p=[]"], dir.path());
    assert_eq!(code(&o), 1);
    let o = run(&["sweep", "--set", "sweep_eps=[]"], dir.path());
    assert_eq!(code(&o), 1);
}
