use std::path::Path;
use std::process::Command;

use fraclaws::{parse_config, run, Status};
use serde_json::Value;

fn config(text: &str, dir: &Path) -> fraclaws::RunConfig {
    let mut c = parse_config(text).unwrap();
    c.output.dir = dir.to_path_buf();
    c
}

fn read_summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn zero_length_simulation_keeps_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("experiment = simulate\ngrid.m = 32\nsolver.t_end = 0\n", dir.path());
    let (summary, status) = run(&c).unwrap();
    assert_eq!(status, Status::Passed);
    let snaps = summary.results["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 1);
    assert_eq!(summary.results["num_steps"], 0);
    assert_eq!(summary.results["mass_drift"], 0.0);
    // TV of sin over one period
    assert!((snaps[0]["tv"].as_f64().unwrap() - 4.0).abs() < 1e-2);
}

#[test]
fn simulate_writes_every_listed_output() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        "experiment = simulate\ngrid.m = 32\nsolver.t_end = 0.1\nmc.num_mc = 2\noutput.fields = true\n",
        dir.path(),
    );
    let (summary, status) = run(&c).unwrap();
    assert_eq!(status, Status::Passed);
    for name in &summary.outputs {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    assert!(summary.outputs.iter().any(|n| n == "snapshots.bin"));
    let on_disk = read_summary(dir.path());
    assert_eq!(on_disk["experiment"], "simulate");
    assert_eq!(on_disk["passed"], true);
    assert_eq!(on_disk["assertions"][0]["name"], "finite");
    let rows = std::fs::read_to_string(dir.path().join("final_state.csv")).unwrap();
    assert!(rows.lines().count() >= 32);
}

#[test]
fn operator_check_passes_on_the_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("experiment = verify-operator\ngrid.m = 64\n", dir.path());
    let (summary, status) = run(&c).unwrap();
    assert_eq!(status, Status::Passed, "{:?}", summary.assertions);
    assert!(summary.results["spectral_relative_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn operator_check_without_lambda_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("experiment = verify-operator\nsolver.lambda = off\n", dir.path());
    assert!(run(&c).is_err());
}

#[test]
fn contraction_of_identical_data_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        "experiment = contraction\ngrid.m = 32\nsolver.t_end = 0.1\nmc.num_mc = 4\n\
         initial_b.shape = sin\ninitial_b.amplitude = 1\ninitial_b.mode = 1\ninitial_b.offset = 0\n",
        dir.path(),
    );
    let (summary, status) = run(&c).unwrap();
    assert_eq!(status, Status::Passed);
    let text = serde_json::to_string(&summary.results).unwrap();
    let results: Value = serde_json::from_str(&text).unwrap();
    for row in results["rows"].as_array().unwrap() {
        assert_eq!(row["estimate"]["mean"], 0.0);
    }
}

#[test]
fn bv_rejects_spatial_noise() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("experiment = bv\ngrid.m = 32\nnoise.kind = multiplicative-spatial\n", dir.path());
    assert!(run(&c).is_err());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fraclaws"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "experiment = simulate\ngrid.m = 16\nsolver.t_end = 0.05\n").unwrap();
    let st = bin().arg(&good).arg("--out").arg(&out).arg("--seed").arg("5").output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stdout).contains("PASS finite"));
    assert_eq!(read_summary(&out)["seed"], 5);

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "experiment = simulate\nsolver.lambda = 1.5\n").unwrap();
    let st = bin().arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 2: `solver.lambda` = 1.5 outside allowed range (0, 1)"));

    let st = bin().arg(dir.path().join("missing.cfg")).output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    // an unreachable tolerance turns into a failed assertion
    let strict = dir.path().join("strict.cfg");
    std::fs::write(&strict, "experiment = verify-operator\ngrid.m = 32\noperator.tolerance = 1e-12\n").unwrap();
    let st = bin().arg(&strict).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stdout).contains("FAIL quadrature_matches_spectral"));
}

#[test]
fn thread_count_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "experiment = simulate\ngrid.m = 16\nsolver.t_end = 0\n").unwrap();
    let st = bin().arg(&good).arg("--out").arg(dir.path()).env(fraclaws::THREADS_ENV, "0").output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    let st = bin().arg(&good).arg("--out").arg(dir.path()).env(fraclaws::THREADS_ENV, "1").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
}
