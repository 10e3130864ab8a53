use std::path::{Path, PathBuf};

use crnlab::harness::{load_experiment, run_experiment, ExperimentResult, Monotonicity};

fn fixtures() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
}

#[test]
fn every_bundled_experiment_passes() {
    let paths = fixtures();
    assert!(paths.len() >= 5);
    for path in paths {
        let (cfg, base) = load_experiment(&path).unwrap_or_else(|e| panic!("{e}"));
        let outcome = run_experiment(&cfg, &base).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(outcome.passed, "{}: {:?}", path.display(), outcome.violations);
        if let ExperimentResult::Comparison(c) = &outcome.result {
            if c.per_n.iter().all(|row| row.sup_error.is_some()) {
                assert_eq!(c.monotonicity, Monotonicity::NonIncreasing, "{}", path.display());
            }
        }
    }
}

#[test]
fn rerunning_an_experiment_reproduces_it() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments/ex1_classical.json");
    let (cfg, base) = load_experiment(&path).unwrap();
    let a = run_experiment(&cfg, &base).unwrap();
    let b = run_experiment(&cfg, &base).unwrap();
    assert_eq!(a.result, b.result);
}
