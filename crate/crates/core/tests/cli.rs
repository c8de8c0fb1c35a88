use std::path::Path;
use std::process::{Command, Output};

use enertree::{FeatureVector, ModelTree};

fn enertree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enertree")).args(args).current_dir(dir).env_remove("ENERTREE_OUT").output().unwrap()
}

fn stdout(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("not json ({e}): {text}"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_twice_gives_identical_trees() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = enertree(tmp.path(), &["synth", "--layers", "2", "--seed", "7", "-o", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read_dir_sorted(&tmp.path().join("a"));
    assert_eq!(a, read_dir_sorted(&tmp.path().join("b")));
    assert!(a.len() > 100);
}

#[test]
fn eval_on_exact_data_recovers_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let o = enertree(
        tmp.path(),
        &["-o", "data", "synth", "--scenario", "exact", "--layers", "1", "--batch-sizes", "8,16", "--seq-lens", "32,64,96"],
    );
    assert!(o.status.success());
    let o = enertree(tmp.path(), &["-o", "res", "eval", "--regressor", "end2end", "--loo", "data", "--epochs", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(s["folds"], 6);
    assert!(s["model_error_pct"].as_f64().unwrap() < 1.0, "{s}");
    for f in ["eval_report.json", "eval_records.csv", "eval_cdf.csv", "eval_summary.csv"] {
        assert!(tmp.path().join("res").join(f).exists(), "{f}");
    }
    let cdf = std::fs::read_to_string(tmp.path().join("res/eval_cdf.csv")).unwrap();
    assert!(cdf.lines().filter(|l| l.ends_with(",1")).count() >= 1, "cdf reaches 1");
}

#[test]
fn eval_with_one_model_is_loo_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    enertree(tmp.path(), &["-o", "data", "synth", "--layers", "1", "--models", "gpt2", "--batch-sizes", "8", "--seq-lens", "32,64"]);
    let o = enertree(tmp.path(), &["-o", "res", "eval", "data"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("leave-one-out needs at least two distinct model names"), "{err}");
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/bert_like_small.json");
    let o = enertree(tmp.path(), &["-o", "v", "validate", good.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o)["violations"], 0);

    let mut t = ModelTree::from_path(&good).unwrap();
    t.root.children[0].ground_truth_energy = Some(0.0);
    std::fs::write(tmp.path().join("bad.json"), t.to_json()).unwrap();
    let o = enertree(tmp.path(), &["-o", "v", "validate", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("v/validation.json")).unwrap()).unwrap();
    assert_eq!(report[0]["violations"].as_array().unwrap().len(), 1);

    let f = serde_json::to_string(&FeatureVector { batch_size: 1.0, seq_len: 1.0, ..Default::default() }).unwrap();
    let doc = format!(
        r#"{{"model_name":"m","batch_size":1,"seq_len":1,"root":{{"name":"X:0","kind":"model","features":{f},"children":[{{"name":"X:0","kind":"ml","primitive":"Linear","features":{f}}}]}}}}"#
    );
    std::fs::write(tmp.path().join("dup.json"), doc).unwrap();
    let o = enertree(tmp.path(), &["-o", "v", "validate", "dup.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate node name `X:0`"));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(enertree(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(enertree(tmp.path(), &["eval", "missing-dir"]).status.code(), Some(1));
    assert_eq!(enertree(tmp.path(), &["cost", "--queries", "3"]).status.code(), Some(1));
    assert_eq!(enertree(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn train_predict_bottleneck_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    enertree(d, &["-o", "data", "synth", "--scenario", "biased", "--layers", "1", "--batch-sizes", "8", "--seq-lens", "32,64"]);
    let o = enertree(d, &["-o", "model", "train", "data", "--regressor", "stepwise", "--epochs", "30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = enertree(
        d,
        &["-o", "pred", "predict", "data/gpt2_b8_s32.json", "--leaf", "model/leaf_regressors.json", "--tree-regressor", "model/tree_regressor.json"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tree = ModelTree::from_path(d.join("data/gpt2_b8_s32.json")).unwrap();
    let render = std::fs::read_to_string(d.join("pred/gpt2_b8_s32.render.txt")).unwrap();
    assert_eq!(render.lines().count(), tree.node_count());
    assert!(render.lines().next().unwrap().ends_with(" J"));

    let o = enertree(
        d,
        &["-o", "bn", "bottleneck", "data", "--leaf", "model/leaf_regressors.json", "--tree-regressor", "model/tree_regressor.json", "--renormalize"],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(d.join("bn/bottleneck.csv")).unwrap();
    assert!(csv.starts_with("model_name,module_type,percent,percent_renormalized\n"));

    // A tree regressor paired with other leaf regressors is refused.
    enertree(d, &["-o", "model2", "train", "data", "--regressor", "stepwise", "--subset", "model_only", "--epochs", "5"]);
    let o = enertree(
        d,
        &["-o", "pred2", "predict", "data", "--leaf", "model2/leaf_regressors.json", "--tree-regressor", "model/tree_regressor.json"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tradeoff_cost_and_power() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("c.csv"), "model_name,accuracy,predicted_energy_j\na,88,4\nb,89,12\nc,85,6\n").unwrap();
    let o = enertree(d, &["-o", "t", "tradeoff", "--candidates", "c.csv", "--budget", "10"]);
    assert_eq!(stdout(&o)["best"], "a");
    assert_eq!(stdout(&o)["pareto_size"], 2);
    let o = enertree(d, &["-o", "t", "tradeoff", "--candidates", "c.csv", "--budget", "3"]);
    assert_eq!(o.status.code(), Some(2));

    let o = enertree(d, &["-o", "c", "cost", "--energy-per-query", "3600000", "--queries", "161"]);
    let usd = stdout(&o)["usd"].as_f64().unwrap();
    assert!((usd - 21.24).abs() <= 0.01);

    let log: String = std::iter::once("timestamp_s,voltage_v,current_a\n".to_string())
        .chain((0..10).map(|i| format!("{},120,0.5\n", i as f64 * 0.17)))
        .collect();
    std::fs::write(d.join("p.csv"), log).unwrap();
    let o = enertree(d, &["-o", "p", "integrate-power", "--log", "p.csv"]);
    assert!((stdout(&o)["energy_j"].as_f64().unwrap() - 102.0).abs() < 1e-9);
}

#[test]
fn baseline_eval_uses_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    enertree(d, &["-o", "data", "synth", "--layers", "1", "--batch-sizes", "8", "--seq-lens", "32", "--traces"]);
    let o = enertree(d, &["-o", "r", "eval", "data", "--regressor", "baseline"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s["model_error_pct"].as_f64().is_some());
    assert!(s["ml_error_pct"].is_null());
}
