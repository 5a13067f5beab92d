mod common;

use flare_core::harness::experiment::{run_experiment, RunSummary, SUMMARY_FILE, SUMMARY_SCHEMA};
use flare_core::learn::Method;
use serde_json::Value;

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(SUMMARY_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn summaries_match_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let v = validator();
    for method in Method::ALL {
        let mut c = common::tiny(&tmp.path().join(method.name()));
        c.method = method;
        let summary = run_experiment(&c).unwrap();
        let text = std::fs::read_to_string(c.out_dir.join(SUMMARY_FILE)).unwrap();
        let json: Value = serde_json::from_str(&text).unwrap();
        let errors: Vec<String> = v.iter_errors(&json).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", method.name());
        let back: RunSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seeds, summary.seeds);
        assert_eq!(back.config_hash, summary.config_hash);
    }
}

#[test]
fn schema_rejects_malformed_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let c = common::tiny(&tmp.path().join("run"));
    run_experiment(&c).unwrap();
    let good: Value = serde_json::from_str(&std::fs::read_to_string(c.out_dir.join(SUMMARY_FILE)).unwrap()).unwrap();
    let v = validator();
    assert!(v.is_valid(&good));

    let mut bad = good.clone();
    bad["schema_version"] = Value::from(2);
    assert!(!v.is_valid(&bad));
    let mut bad = good.clone();
    bad["config_hash"] = Value::from("abc");
    assert!(!v.is_valid(&bad));
    let mut bad = good.clone();
    bad["method"] = Value::from("greedy");
    assert!(!v.is_valid(&bad));
    let mut bad = good;
    bad["extra"] = Value::from(1);
    assert!(!v.is_valid(&bad));
}

#[test]
fn config_hash_ignores_seeds_and_output_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = common::tiny(&tmp.path().join("a"));
    let mut b = common::tiny(&tmp.path().join("b"));
    b.seeds = vec![77];
    b.method = Method::Static;
    a.method = Method::Static;
    let (sa, sb) = (run_experiment(&a).unwrap(), run_experiment(&b).unwrap());
    assert_eq!(sa.config_hash, sb.config_hash);
    a.set("r_th", "7500000").unwrap();
    let sa = run_experiment(&a).unwrap();
    assert_ne!(sa.config_hash, sb.config_hash);
}
