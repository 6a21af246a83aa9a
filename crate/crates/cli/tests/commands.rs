//! Command contracts exercised through the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn ifcausal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifcausal"))
        .args(args)
        .args(["--out", "out"])
        .current_dir(dir)
        .env_remove("IFCAUSAL_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = ifcausal(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn ate_without_bundle_names_it_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "dgp1", "--n", "2000"]);
    let out = ifcausal(dir.path(), &["ate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config code=2"));
    assert!(err.contains("bundle.json"), "{err}");
    // --fit writes the bundle on the fly.
    ok(dir.path(), &["ate", "--fit"]);
    assert!(dir.path().join("out/bundle.json").exists());
}

#[test]
fn simulate_then_ate_recovers_the_dgp1_effect() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "dgp1", "--n", "50000", "--seed", "5"]);
    ok(dir.path(), &["fit", "--seed", "5"]);
    ok(dir.path(), &["ate", "--seed", "5"]);
    let ate = json(dir.path(), "ate.json");
    let rd = &ate["result"]["outcomes"][0]["rd"];
    let (point, se) = (rd["point"].as_f64().unwrap(), rd["se"].as_f64().unwrap());
    assert!((point - 0.15).abs() < 3.0 * se, "{point} ± {se}");
    let meta = &ate["meta"];
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["command"], "ate");
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("out/ate.csv")).unwrap();
    assert!(csv.starts_with("# tool=ifcausal"));
}

#[test]
fn stale_bundle_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "2000"]);
    ok(dir.path(), &["fit"]);
    let out = ifcausal(dir.path(), &["ate", "--folds", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("different data or settings"));
}

#[test]
fn sensitivity_grid_has_101_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "3000"]);
    ok(dir.path(), &["sensitivity", "--fit", "--tau-max", "0.5"]);
    for name in ["sensitivity_sample.csv", "sensitivity_generalization.csv"] {
        let text = std::fs::read_to_string(dir.path().join("out").join(name)).unwrap();
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 101, "{name}");
    }
    let s = json(dir.path(), "sensitivity.json");
    assert!(s["result"]["comparator"].is_object());
}

#[test]
fn unknown_config_keys_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"seed": 1, "nuisance": {"folds": 2, "learnr": "glm"}}"#).unwrap();
    let out = ifcausal(dir.path(), &["simulate", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("learnr"));

    ok(dir.path(), &["simulate", "--n", "500"]);
    let out = ifcausal(dir.path(), &["incremental", "--fit", "--delta-grid", "1:2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ifcausal(dir.path(), &["sensitivity", "--fit", "--tau-max", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ifcausal(dir.path(), &["simulate", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_problems_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "500"]);
    // Every row hesitant: the analytic sample is empty.
    let path = dir.path().join("out/data.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    let v = header.split(',').position(|c| c == "v").unwrap();
    let mut body = format!("{header}\n");
    for l in lines {
        let mut cells: Vec<&str> = l.split(',').collect();
        cells[v] = "0";
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    std::fs::write(dir.path().join("hesitant.csv"), body).unwrap();
    let out = ifcausal(dir.path(), &["fit", "--data", "hesitant.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error kind=data code=3"));
}

#[test]
fn variants_compare_sample_definitions() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "hesitant", "--n", "20000"]);
    ok(dir.path(), &["variants"]);
    let rows = json(dir.path(), "variants.json");
    assert_eq!(rows["result"].as_array().unwrap().len(), 1);

    ok(dir.path(), &["variants", "--variants", "hesitant-included,suspicious-excluded"]);
    let rows = json(dir.path(), "variants.json")["result"].as_array().unwrap().clone();
    let point = |i: usize| rows[i]["rd"]["point"].as_f64().unwrap();
    assert_eq!(rows[0]["variant"], "baseline");
    // Zero effect among the hesitant pulls the estimate toward zero.
    assert!(point(1).abs() < point(0).abs());
    // No suspicious answers in clean synthetic data.
    assert_eq!(point(2), point(0));

    let out = ifcausal(dir.path(), &["variants", "--variants", "everyone"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn subgroup_discovery_then_confirmation() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "planted", "--n", "20000"]);
    ok(dir.path(), &["subgroups"]);
    let tree = std::fs::read_to_string(dir.path().join("out/tree.txt")).unwrap();
    assert!(tree.starts_with("split on x1"), "{tree}");
    let mut cands = json(dir.path(), "candidates.json");
    for c in cands["result"].as_array_mut().unwrap() {
        c["approved"] = serde_json::Value::Bool(true);
    }
    std::fs::write(dir.path().join("approved.json"), cands.to_string()).unwrap();
    ok(dir.path(), &["subgroups", "--candidates", "approved.json"]);
    let conf = json(dir.path(), "confirmation.json");
    assert_eq!(conf["result"]["groups"].as_array().unwrap().len(), 2);
    assert!(conf["result"]["tests"][0]["test"]["p_value"].as_f64().unwrap() < 0.05);
}

#[test]
fn diagnose_and_mediate_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "dgp2", "--n", "4000"]);
    ok(dir.path(), &["mediate", "--fit", "--reference", "1"]);
    let m = json(dir.path(), "mediation.json");
    assert_eq!(m["result"].as_array().unwrap().len(), 1);
    assert_eq!(m["result"][0]["reference"], 1);
    ok(dir.path(), &["diagnose"]);
    for f in ["calibration.csv", "weights.csv", "diagnostics.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let out = ifcausal(dir.path(), &["mediate", "--reference", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn artifacts_read_back_into_their_types() {
    use ifcausal::mediation::DecompositionReport;
    use ifcausal::nuisance::NuisanceBundle;
    use ifcausal::sim::OracleTruth;
    use ifcausal_cli::artifacts::read_json;
    use ifcausal_cli::commands::{AteArtifact, CurveArtifact, SensitivityArtifact};

    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "dgp2", "--n", "3000"]);
    for cmd in ["fit", "ate", "mediate", "incremental", "sensitivity"] {
        ok(dir.path(), &[cmd]);
    }
    let out = dir.path().join("out");
    let hash = read_json::<AteArtifact>(&out.join("ate.json")).unwrap().meta.config_hash;
    assert_eq!(read_json::<NuisanceBundle>(&out.join("bundle.json")).unwrap().meta.config_hash, hash);
    read_json::<OracleTruth>(&out.join("truth.json")).unwrap();
    read_json::<Vec<DecompositionReport>>(&out.join("mediation.json")).unwrap();
    read_json::<Vec<CurveArtifact>>(&out.join("incremental.json")).unwrap();
    read_json::<SensitivityArtifact>(&out.join("sensitivity.json")).unwrap();
}
