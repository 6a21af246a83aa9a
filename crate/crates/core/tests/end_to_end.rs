//! Public-API workflows: survey text in, estimates out.

use std::io::Write;

use ifcausal::effects::{risk_difference, risk_ratio};
use ifcausal::hte::{self, SplitId, TreeParams};
use ifcausal::incremental::{incremental_curve, CurveSpec};
use ifcausal::ingest::{build_analytic_sample, load_survey, write_survey, BinConfig, OutcomeKind, SampleFilters, Schema, ValueMaps};
use ifcausal::mediation::interventional_decomposition;
use ifcausal::nuisance::{crossfit, LearnerKind, NuisanceBundle, NuisanceSpec};
use ifcausal::sensitivity::{default_taus, explain_away, generalization_bounds};
use ifcausal::sim;

fn simulated_file(spec: &sim::DgpSpec, n: usize) -> (tempfile::TempDir, std::path::PathBuf, Schema) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("survey.csv");
    let records = sim::generate(spec, n).unwrap();
    let schema = Schema::simulated(&spec.covariate_names());
    write_survey(&path, &records, &schema).unwrap();
    (dir, path, schema)
}

#[test]
fn csv_round_trip_feeds_every_estimator() {
    let spec = sim::dgp2(1.0);
    let (_dir, path, schema) = simulated_file(&spec, 8_000);
    let loaded = load_survey(&path, &schema, &ValueMaps::new()).unwrap();
    assert_eq!(loaded.report.rows_read, 8_000);
    let (sample, ledger) =
        build_analytic_sample(loaded.records, &schema, &SampleFilters::default(), &BinConfig::default()).unwrap();
    assert_eq!(ledger.final_n, sample.len());
    assert!(ledger.hesitant_excluded > 0, "dgp2 has a hesitant stratum");

    let bundle = crossfit(&sample, &NuisanceSpec::default()).unwrap();
    let rd = risk_difference(&sample, &bundle, OutcomeKind::Y).unwrap();
    let rr = risk_ratio(&sample, &bundle, OutcomeKind::Y).unwrap();
    assert!(rd.ci.0 < rd.point && rd.point < rd.ci.1);
    assert_eq!(rd.point < 0.0, rr.point < 1.0);

    let dec = interventional_decomposition(&sample, &bundle, 0).unwrap();
    let sum = dec.ide.point + dec.iie_m1.point + dec.iie_m2.point + dec.cov.point;
    assert!((sum - dec.total.point).abs() < 1e-12);

    let curve = incremental_curve(&sample, &bundle, OutcomeKind::Y, &CurveSpec { replicates: 200, ..Default::default() }).unwrap();
    for p in &curve.points {
        assert!(p.uniform.0 <= p.ci.0 && p.ci.1 <= p.uniform.1);
    }

    let sens = generalization_bounds(&sample, &bundle, OutcomeKind::Y, &default_taus()).unwrap();
    let ea = explain_away(&sens);
    assert!(ea.tau_star_closed_form >= 0.0);
}

#[test]
fn bundle_json_round_trip_preserves_estimates() {
    let spec = sim::dgp1();
    let records = sim::generate(&spec, 3_000).unwrap();
    let schema = Schema::simulated(&spec.covariate_names());
    let (sample, _) = build_analytic_sample(records, &schema, &SampleFilters::default(), &BinConfig::default()).unwrap();
    let bundle = crossfit(&sample, &NuisanceSpec::default()).unwrap();
    let back = NuisanceBundle::from_json(&bundle.to_json().unwrap()).unwrap();
    assert_eq!(bundle, back);
    let a = risk_difference(&sample, &bundle, OutcomeKind::Y).unwrap();
    let b = risk_difference(&sample, &back, OutcomeKind::Y).unwrap();
    assert_eq!(a.point.to_bits(), b.point.to_bits());
}

#[test]
fn boosted_trees_recover_the_dgp1_effect() {
    let spec = sim::dgp1();
    let records = sim::generate(&spec, 20_000).unwrap();
    let schema = Schema::simulated(&spec.covariate_names());
    let (sample, _) = build_analytic_sample(records, &schema, &SampleFilters::default(), &BinConfig::default()).unwrap();
    let mut ns = NuisanceSpec { mediation: false, folds: Some(2), ..NuisanceSpec::default() };
    ns.learner.kind = LearnerKind::GradientBoostedTrees;
    let bundle = crossfit(&sample, &ns).unwrap();
    let rd = risk_difference(&sample, &bundle, OutcomeKind::Y).unwrap();
    assert!((rd.point - 0.15).abs() < 4.0 * rd.se(), "{} ± {}", rd.point, rd.se());
}

#[test]
fn bundles_cannot_cross_splits() {
    let spec = sim::planted(0.05, 0.3);
    let records = sim::generate(&spec, 4_000).unwrap();
    let schema = Schema::simulated(&spec.covariate_names());
    let (sample, _) = build_analytic_sample(records, &schema, &SampleFilters::default(), &BinConfig::default()).unwrap();
    let (aux, main) = hte::split_sample(&sample, 9).unwrap();
    let ns = NuisanceSpec { mediation: false, ..NuisanceSpec::default() };
    let main_bundle = crossfit(&main, &ns).unwrap();
    // Same length, different records: refused.
    if aux.len() == main.len() {
        assert!(hte::pseudo_outcomes(&aux, &main_bundle, SplitId::Auxiliary).is_err());
    }
    let aux_bundle = crossfit(&aux, &ns).unwrap();
    let pseudo = hte::pseudo_outcomes(&aux, &aux_bundle, SplitId::Auxiliary).unwrap();
    let (tree, candidates) = hte::fit_tree(&pseudo, &aux, None, &TreeParams { min_leaf: 200, ..Default::default() }).unwrap();
    assert_eq!(candidates.len(), tree.leaf_count());
    // Confirmation on the discovery split is rejected.
    let err = hte::confirm(&candidates, &tree, &aux, &aux_bundle, 50).unwrap_err();
    assert!(err.to_string().contains("discovery"));
}

#[test]
fn comment_lines_and_sentinels_are_handled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "# produced by a test").unwrap();
    writeln!(f, "y,a,m1,m2,v,x").unwrap();
    writeln!(f, "1,1,3,3,1,a").unwrap();
    writeln!(f, "0,0,-99,1,1,b").unwrap();
    writeln!(f, "1,0,2,2,0,a").unwrap();
    drop(f);
    let mut schema = Schema::simulated(&["x"]);
    schema.missing_sentinels = vec!["-99".into()];
    let loaded = load_survey(&path, &schema, &ValueMaps::new()).unwrap();
    assert_eq!(loaded.records.len(), 3);
    assert_eq!(loaded.records[1].mediator1, None);
    let (sample, ledger) =
        build_analytic_sample(loaded.records, &schema, &SampleFilters::default(), &BinConfig::default()).unwrap();
    assert_eq!(sample.len(), 1);
    assert_eq!(ledger.incomplete_excluded, 1);
    assert_eq!(ledger.hesitant_excluded, 1);
    assert!((ledger.p_r - 0.5).abs() < 1e-15);
}
