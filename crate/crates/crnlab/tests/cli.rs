use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn model(name: &str) -> PathBuf {
    root().join("models").join(name)
}

fn crnlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crnlab")).args(args).output().expect("spawn crnlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn analyze_reports_deficiency() {
    let t1 = crnlab(&["analyze", p(&model("t1.crn"))]);
    assert_eq!(code(&t1), 0);
    let v = json(&t1);
    assert_eq!(v["deficiency"], 0);
    assert_eq!(v["weakly_reversible"], true);

    let ex1 = crnlab(&["analyze", p(&model("ex1.crn"))]);
    assert_eq!(code(&ex1), 0);
    assert_eq!(json(&ex1)["deficiency"], 1);
}

#[test]
fn missing_or_malformed_model_is_an_input_error() {
    let o = crnlab(&["analyze", "/nonexistent/model.crn"]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.crn");
    std::fs::write(&bad, "S1 -> S2\n").unwrap();
    let o = crnlab(&["analyze", p(&bad)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.crn:1:"), "{err}");
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = crnlab(&[
            "simulate",
            p(&model("mm_inf.crn")),
            "--init",
            "3",
            "--seed",
            seed,
            "--max-time",
            "50",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "11");
    assert_eq!(a, run("b.csv", "11"));
    assert_ne!(a, run("c.csv", "12"));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(a.as_slice());
    assert_eq!(reader.headers().unwrap(), vec!["t", "x_1"]);
    assert!(reader.records().all(|r| r.unwrap().len() == 2));
}

#[test]
fn simulate_without_reactions_writes_initial_state_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("still.crn");
    std::fs::write(&m, "species: A, B\n").unwrap();
    let o = crnlab(&["simulate", p(&m), "--init", "2,3", "--max-time", "5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data, ["t,x_1,x_2", "0,2,3"]);
    assert!(text.ends_with("# termination: absorbed, events: 0\n"));
}

#[test]
fn simulate_reports_event_limit_in_footer() {
    let o =
        crnlab(&["simulate", p(&model("cap_p2.crn")), "--init", "0,200", "--max-time", "1e6", "--max-events", "25"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.trim_end().ends_with("# termination: event-limit, events: 25"), "{text}");
}

#[test]
fn simulate_rejects_wrong_dimension() {
    let o = crnlab(&["simulate", p(&model("cap_p2.crn")), "--init", "5", "--max-time", "1"]);
    assert_eq!(code(&o), 2);
    let o = crnlab(&["simulate", p(&model("cap_p2.crn")), "--init", "5,x", "--max-time", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bundled_regime_a_experiment_passes() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("per_n.csv");
    let cfg = root().join("experiments/t1_regime_a.json");
    let o = crnlab(&["experiment", p(&cfg), "--csv", p(&csv_path), "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    let per_n = v["result"]["result"]["per_n"].as_array().unwrap();
    assert!(per_n.last().unwrap()["sup_error"]["mean"].as_f64().unwrap() < 0.05);
    let table = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(table.lines().count(), 1 + per_n.len());
}

#[test]
fn bundled_drift_experiment_has_negative_drift() {
    let cfg = root().join("experiments/agazzi_drift.json");
    let o = crnlab(&["experiment", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    for row in v["result"]["result"]["rows"].as_array().unwrap() {
        assert!(row["estimate"]["drift_ratio"].as_f64().unwrap() < 0.0);
    }
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(model("mm_inf.crn"), dir.path().join("mm.crn")).unwrap();

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"kind": "bifurcation", "model": "mm.crn"}"#).unwrap();
    let o = crnlab(&["experiment", p(&unknown)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind"));

    let bad_field = dir.path().join("bad_field.json");
    std::fs::write(
        &bad_field,
        r#"{"kind": "occupation", "model": "mm.crn", "experiment": {"initial": [{"coef": 1}], "n_values": [10],
            "replicas": -3, "seed": 1, "horizon": 10, "reference": {"kind": "conditioned-poisson", "rho": 1}}}"#,
    )
    .unwrap();
    let o = crnlab(&["experiment", p(&bad_field)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.replicas"));

    // The empirical law cannot match a wrong reference this closely.
    let strict = dir.path().join("strict.json");
    std::fs::write(
        &strict,
        r#"{"kind": "occupation", "model": "mm.crn", "experiment": {"initial": [{"coef": 1}], "n_values": [5, 10],
            "replicas": 4, "seed": 1, "horizon": 200, "reference": {"kind": "conditioned-poisson", "rho": 3}},
            "thresholds": {"max_tv": 0.01}}"#,
    )
    .unwrap();
    let o = crnlab(&["experiment", p(&strict)]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_eq!(v["passed"], false);
    assert!(!v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn stationary_measure_and_refusal() {
    let o = crnlab(&["stationary", p(&model("t1.crn")), "--window", "30"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["residual"].as_f64().unwrap() < 1e-8);

    let o = crnlab(&["stationary", p(&model("mm_inf.crn")), "--base-state", "0", "--window", "40"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    // Poisson(1): π(k) = e^{-1} / k!.
    let mut fact = 1.0;
    for (k, s) in v["states"].as_array().unwrap().iter().take(10).enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        assert_eq!(s["state"][0], k as u64);
        let want = (-1.0f64).exp() / fact;
        assert!((s["probability"].as_f64().unwrap() - want).abs() < 1e-12);
    }

    let o = crnlab(&["stationary", p(&model("ex1.crn"))]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("deficiency"));
}
