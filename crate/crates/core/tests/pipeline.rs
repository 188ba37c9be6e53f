mod common;

use std::path::Path;

use geosurv::config::parse_json;
use geosurv::data::{
    clean_cohort, encode_covariates, load_cohort, load_cohort_inferred, read_cohort, save_cohort,
    CleaningRules, EncodingSpec, Schema,
};
use geosurv::estimators::{cox_fit, cox_partial_loglik, CoxFitOptions, TieRule};
use geosurv::geo::{ExpectedSurvivalTable, PopulationTable};
use geosurv::Error;

const REGISTRY: &str = "\
patient,age_dx,gender,race_grp,dx_year,st,cnty,stage,size_mm,months,vital
a1,61,F,white,2004,KY,KY1,I,12.5,30,dead
a2,55,M,black,2004,KY,KY2,II,,14,alive
a3,85+,F,white,2005,TN,TN1,I,8,40,alive
a4,70,M,other,2006,TN,TN1,III,20,5,dead
";

fn schema() -> Schema {
    parse_json(
        r#"{"id": "patient", "age": "age_dx", "sex": "gender", "race": "race_grp",
            "diagnosis_year": "dx_year", "state": "st", "county": "cnty",
            "time": "months", "event": "vital",
            "categorical": ["stage"], "numeric": ["size_mm"]}"#,
        Path::new("schema.json"),
    )
    .unwrap()
}

#[test]
fn registry_extract_loads_cleans_and_encodes() {
    let cohort = read_cohort(REGISTRY.as_bytes(), &schema(), "registry").unwrap();
    assert_eq!(cohort.len(), 4);
    let (clean, report) = clean_cohort(&cohort, &CleaningRules::default());
    // a3 is top-coded, a2 is missing size_mm
    let dropped: Vec<&str> = report.removals.iter().map(|r| r.row_id.as_str()).collect();
    assert!(dropped.contains(&"a3") && dropped.contains(&"a2"), "{dropped:?}");
    assert_eq!(clean.len(), 2);
    let m = encode_covariates(
        &clean,
        &EncodingSpec {
            categorical: vec!["stage".into()],
            numeric: vec!["size_mm".into()],
            skip_pruning: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(m.columns(), ["stage=III", "size_mm"]);
    assert_eq!(m.row(1), [1.0, 20.0]);
}

#[test]
fn canonical_file_round_trips_without_schema() {
    let cohort = read_cohort(REGISTRY.as_bytes(), &schema(), "registry").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    save_cohort(&cohort, &path).unwrap();
    let back = load_cohort_inferred(&path).unwrap();
    assert_eq!(back.subjects(), cohort.subjects());
}

#[test]
fn schema_file_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("schema.json");
    std::fs::write(&path, "{\n  \"age\": \"a\",\n  \"sex\": 3\n}\n").unwrap();
    match Schema::from_json_file(&path) {
        Err(Error::Config { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_rows_are_all_reported() {
    let text = REGISTRY.replace("a2,55", "a2,abc").replace(",5,dead", ",5,maybe");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, text).unwrap();
    match load_cohort(&path, &schema()) {
        Err(Error::Rows(rows)) => {
            let numbers: Vec<usize> = rows.iter().map(|r| r.row).collect();
            assert_eq!(numbers, vec![2, 4]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn table_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("population.csv");
    std::fs::write(
        &path,
        "age,sex,year,race,county,state,count\n60,F,2010,white,K1,KY,10\n60,F,2010,white,K2,KY,lots\n",
    )
    .unwrap();
    let err = PopulationTable::load(&path).unwrap_err().to_string();
    assert!(err.contains("population.csv") && err.contains("line 3"), "{err}");

    let esr = dir.path().join("esr.csv");
    std::fs::write(&esr, "age,sex,year,race,county,state,esr\n60,F,2010,white,K1,KY,1.5\n").unwrap();
    let err = ExpectedSurvivalTable::load(&esr).unwrap_err().to_string();
    assert!(err.contains("esr.csv") && err.contains("line 2"), "{err}");
}

/// Breslow log partial likelihood written out directly from its definition.
fn breslow_oracle(beta: &[f64], x: &[Vec<f64>], time: &[f64], event: &[bool]) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut ll = 0.0;
    for i in 0..time.len() {
        if event[i] {
            let risk: f64 = (0..time.len()).filter(|&j| time[j] >= time[i]).map(|j| eta[j].exp()).sum();
            ll += eta[i] - risk.ln();
        }
    }
    ll
}

#[test]
fn partial_likelihood_matches_definition() {
    use rand::Rng;
    let mut r = common::rng(2);
    for _ in 0..20 {
        let n = 25;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(0.0..2.0)]).collect();
        let time: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(1..8u32))).collect();
        let mut event: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        event[0] = true;
        let m = geosurv::data::DesignMatrix::new(
            vec!["a".into(), "b".into()],
            x.concat(),
            time.clone(),
            event.clone(),
        )
        .unwrap();
        let beta = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let got = cox_partial_loglik(&beta, &m, TieRule::Breslow, 0.0).unwrap().value;
        let want = breslow_oracle(&beta, &x, &time, &event);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        // the penalty is subtracted as pen/2 |beta|^2
        let pen = cox_partial_loglik(&beta, &m, TieRule::Breslow, 2.0).unwrap().value;
        assert!((pen - (got - (beta[0] * beta[0] + beta[1] * beta[1]))).abs() < 1e-10);
    }
}

#[test]
fn penalizer_shrinks_coefficients() {
    let cohort = common::synth_cohort(&common::small_synth(3_000, 6));
    let m = encode_covariates(
        &cohort,
        &EncodingSpec {
            categorical: vec!["grade".into()],
            numeric: vec!["treatment".into()],
            ..Default::default()
        },
    )
    .unwrap();
    let free = cox_fit(&m, &CoxFitOptions::default()).unwrap();
    let shrunk = cox_fit(&m, &CoxFitOptions { penalizer: 500.0, ..Default::default() }).unwrap();
    let norm = |b: &[f64]| b.iter().map(|v| v * v).sum::<f64>();
    assert!(norm(&shrunk.beta) < norm(&free.beta));
    assert!(free.converged && shrunk.converged);
}
