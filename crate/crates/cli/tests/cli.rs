use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const M0_MODEL: &str = "[model]\na = [[0.0]]\nc = [[1.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n";

const SMALL_MC: &str =
    "[mc]\nstep = 0.01\nhorizon = 1.0\nn_mc = 200\ngrid_points = 2\ndeltas = [1.0]\n";

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn kbstab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kbstab"));
    cmd.args(args).env_remove("KBSTAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(command: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    kbstab(&args, &[])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_on_m0_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "m0.toml", M0_MODEL);
    let out = dir.path().join("out");
    let o = run("constants", &sc, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["command"], "constants");
    assert_eq!(r["passed"], true);
    assert!(!out.read_dir().unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with(".kbstab-staging")));
}

#[test]
fn missing_r2_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "bad.toml",
        "[model]\na = [[0.0]]\nc = [[1.0]]\nr1 = [[1.0]]\n",
    );
    let o = run("constants", &sc, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.r2"), "{}", stderr(&o));
}

#[test]
fn table_times_must_increase() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[model]\nstate_dim = 1\nobs_dim = 1\nc = [[1.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n\
                [model.a]\nt = [0.0, 1.0, 1.0]\nvalue = [[[0.0]], [[0.1]], [[0.2]]]\n";
    let sc = write(dir.path(), "bad.toml", body);
    let o = run("gramians", &sc, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("model.a.t"), "{}", stderr(&o));
}

#[test]
fn monte_carlo_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "m0.toml", &format!("{M0_MODEL}{SMALL_MC}"));
    let o = run("verify-events", &sc, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "m0.toml",
        &format!("{M0_MODEL}{SMALL_MC}seed = 1\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run("verify-events", &sc, out, &["--seed", "99"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra["replication"]["seed"], 99);
    assert_eq!(ra["results"], rb["results"]);
    assert_eq!(ra["checks"], rb["checks"]);
}

#[test]
fn kbstab_out_is_used_without_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "m0.toml", M0_MODEL);
    let target = dir.path().join("from-env");
    let o = kbstab(
        &["solve-are", "--scenario", sc.to_str().unwrap(), "--quiet"],
        &[("KBSTAB_OUT", &target)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(report(&target)["command"], "solve-are");
}

#[test]
fn unobservable_model_is_not_certifiable() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[model]\na = [[-1.0]]\nc = [[0.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n";
    let sc = write(dir.path(), "blind.toml", body);
    let o = run("constants", &sc, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("not certifiable"), "{}", stderr(&o));
}

#[test]
fn json_scenarios_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"model": {"a": [[0.0]], "c": [[1.0]], "r1": [[1.0]], "r2": [[1.0]]}, "output": {"csv": false}}"#;
    let sc = write(dir.path(), "m0.json", body);
    let out = dir.path().join("out");
    let o = run("solve-are", &sc, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert!(!out.read_dir().unwrap().any(|e| e
        .unwrap()
        .path()
        .extension()
        .is_some_and(|x| x == "csv")));
}

#[test]
fn time_varying_events_use_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[model]\nc = [[1.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n\
                [model.a]\nt = [0.0, 2.0]\nvalue = [[[-0.5]], [[0.5]]]\n\
                [analysis]\nhorizon = 2.0\n";
    let sc = write(
        dir.path(),
        "tv.toml",
        &format!("{body}{SMALL_MC}seed = 3\nq = [[1.0]]\n"),
    );
    let out = dir.path().join("out");
    let o = run("verify-events", &sc, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(report(&out)["results"]["sigma"]["constants"], "envelope");
}
