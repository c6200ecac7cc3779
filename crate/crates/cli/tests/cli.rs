use std::path::Path;
use std::process::{Command, Output};

use rbns_core::aggregate::{chain_ladder, mack_se, Triangle};
use rbns_core::data::write_csv;
use rbns_core::synthetic::{generate, GeneratorConfig};

const GENERATOR: &str = r#"{
  "tau": 5, "d": 3,
  "claims_per_year": [150, 150, 150, 150, 150],
  "covariates": [{"name": "type", "type": "categorical", "levels": ["A", "B"], "probabilities": [0.6, 0.4]}],
  "settlement": {"by_dev_year": [0.3, 0.4, 0.5], "effects": {"type": {"B": 0.4}}},
  "payment": {"by_dev_year": [0.7, 0.6, 0.5], "close": 0.5},
  "size": {"by_dev_year": [1000, 1500, 1800], "effects": {"type": {"B": 0.3}}},
  "dispersion": 0.5
}"#;

const MODEL: &str = r#"{
  "layers": [
    {"name": "close", "order": 1, "response": "close", "family": "bernoulli",
     "covariates": ["dev_year", "type"], "filter": [{"kind": "open"}, {"kind": "before_max_delay"}]},
    {"name": "payment", "order": 2, "response": "payment", "family": "bernoulli",
     "covariates": ["dev_year", "close"], "filter": [{"kind": "open"}]},
    {"name": "size", "order": 3, "response": "size", "family": "gamma",
     "covariates": ["dev_year", "type"],
     "filter": [{"kind": "open"}, {"kind": "compare", "field": "payment", "op": "eq", "value": 1}]}
  ]
}"#;

fn rbns(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbns")).current_dir(dir).args(args).output().expect("run rbns")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rbns(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.json"), GENERATOR).unwrap();
    std::fs::write(dir.path().join("model.json"), MODEL).unwrap();
    ok(dir.path(), &["generate", "--config", "gen.json", "--out", "data"]);
    dir
}

fn data_args<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![rest[0], "--data", "data/claims.csv", "--schema", "data/schema.json"];
    v.extend_from_slice(&rest[1..]);
    v
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rbns(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(rbns(dir.path(), &["fit", "--bogus"]).status.code(), Some(2));
}

#[test]
fn generate_matches_library_and_writes_manifest() {
    let dir = setup();
    let config: GeneratorConfig = serde_json::from_str(GENERATOR).unwrap();
    assert_eq!(config.seed, 20201);
    let mut expected = Vec::new();
    write_csv(&generate(&config).unwrap(), &mut expected).unwrap();
    let written = std::fs::read(dir.path().join("data/claims.csv")).unwrap();
    assert_eq!(written, expected);
    let manifest = json(&dir.path().join("data/manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 20201);
}

#[test]
fn explicit_seed_changes_data() {
    let dir = setup();
    ok(dir.path(), &["generate", "--config", "gen.json", "--seed", "5", "--out", "other"]);
    let a = std::fs::read(dir.path().join("data/claims.csv")).unwrap();
    let b = std::fs::read(dir.path().join("other/claims.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn invalid_config_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.json"), GENERATOR.replace("[150, 150, 150, 150, 150]", "[150]")).unwrap();
    let out = rbns(dir.path(), &["generate", "--config", "gen.json", "--out", "data"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("data/manifest.json").exists());
    let out = rbns(dir.path(), &["fit", "--data", "missing.csv", "--config", "gen.json", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_failure_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tri.csv"), "0,5\n0\n").unwrap();
    let out = rbns(dir.path(), &["chainladder", "--triangle", "tri.csv", "--out", "cl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn chainladder_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tri.csv"), "100,60,20\n110,70\n120\n").unwrap();
    let out = ok(dir.path(), &["chainladder", "--triangle", "tri.csv", "--out", "cl"]);
    let tri = Triangle::from_rows("size", &[vec![100.0, 60.0, 20.0], vec![110.0, 70.0], vec![120.0]], 3).unwrap();
    let cl = chain_ladder(&tri).unwrap();
    let mack = mack_se(&tri).unwrap();
    let report = json(&dir.path().join("cl/chainladder.json"));
    assert_eq!(report["total_reserve"].as_f64().unwrap(), cl.total_reserve);
    assert_eq!(report["mack_total_se"].as_f64().unwrap(), mack.total_se);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reserve:"));
}

#[test]
fn fit_reserve_round_trip_is_deterministic() {
    let dir = setup();
    ok(dir.path(), &data_args(&["fit", "--config", "model.json", "--out", "fit"]));
    let reserve = |out: &str| {
        ok(dir.path(), &data_args(&["reserve", "--model", "fit/model.json", "--paths", "50", "--horizon", "1", "--out", out]));
        std::fs::read(dir.path().join(out).join("reserve.json")).unwrap()
    };
    assert_eq!(reserve("r1"), reserve("r2"));
    ok(dir.path(), &data_args(&["simulate", "--model", "fit/model.json", "--paths", "5", "--out", "sim"]));
    let paths = std::fs::read_to_string(dir.path().join("sim/paths.csv")).unwrap();
    assert!(paths.starts_with("path_id,claim_id,dev_year"));
}

#[test]
fn aggregate_and_test_subcommands() {
    let dir = setup();
    ok(dir.path(), &data_args(&["triangle", "--out", "tri"]));
    ok(dir.path(), &["chainladder", "--triangle", "tri/triangle_size.csv", "--out", "cl1"]);
    ok(dir.path(), &data_args(&["chainladder", "--out", "cl2"]));
    assert_eq!(json(&dir.path().join("cl1/chainladder.json")), json(&dir.path().join("cl2/chainladder.json")));
    ok(dir.path(), &data_args(&["dcl", "--out", "dcl"]));
    ok(dir.path(), &data_args(&["crm", "--paths", "20", "--out", "crm"]));
    ok(dir.path(), &data_args(&["bridge-test", "--config", "model.json", "--out", "bt"]));
    let bt = json(&dir.path().join("bt/bridge_test.json"));
    assert!(bt["joint"]["p_value"].as_f64().is_some());
}

#[test]
fn evaluate_writes_results_and_summary() {
    let dir = setup();
    let eval = format!(
        r#"{{"cutoffs": [3, 4], "horizon": 1, "n_paths": 20,
            "methods": [{{"method": "chain_ladder"}}, {{"method": "hierarchical", "name": "hrm", "model": {MODEL}}}]}}"#
    );
    std::fs::write(dir.path().join("eval.json"), eval).unwrap();
    ok(dir.path(), &data_args(&["evaluate", "--config", "eval.json", "--out", "ev"]));
    let results = std::fs::read_to_string(dir.path().join("ev/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 4);
    assert!(results.starts_with("date,model,predicted,actual,pe"));
    let summary = json(&dir.path().join("ev/summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 2);
    let out = rbns(dir.path(), &data_args(&["evaluate", "--config", "eval.json", "--horizon", "9", "--out", "ev2"]));
    assert_eq!(out.status.code(), Some(3));
}
