mod common;

use geosurv::data::{encode_covariates, Cohort, EncodingSpec};
use geosurv::experiment::{
    emit_report, read_per_subset, read_report, run_paired_fit, run_statewise, run_subset_ttest,
    write_per_subset, BootstrapConfig, ExperimentConfig, ReportRow,
};
use geosurv::synth::SynthConfig;
use rand::seq::SliceRandom;

fn quick_cfg() -> ExperimentConfig {
    ExperimentConfig {
        n_subsets: 10,
        bootstrap: BootstrapConfig {
            replicates: 200,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn overall_matrix(cohort: &Cohort, cfg: &ExperimentConfig) -> geosurv::data::DesignMatrix {
    let mut spec = EncodingSpec {
        categorical: cfg.covariates.categorical.clone(),
        numeric: cfg.covariates.numeric.clone(),
        ..Default::default()
    };
    spec.categorical.extend(cfg.geo.categorical.iter().cloned());
    spec.categorical.extend(cfg.overall_geo.categorical.iter().cloned());
    spec.numeric.extend(cfg.geo.numeric.iter().cloned());
    encode_covariates(cohort, &spec).unwrap()
}

#[test]
fn constant_geo_column_gives_no_difference() {
    let cohort = common::synth_cohort(&common::small_synth(5_000, 3));
    let subjects = cohort
        .subjects()
        .iter()
        .cloned()
        .map(|mut s| {
            s.numeric.insert("state_esr".into(), 0.9);
            s
        })
        .collect();
    let cohort = common::cohort(subjects);
    let cfg = ExperimentConfig::default();
    let spec = EncodingSpec {
        categorical: cfg.covariates.categorical.clone(),
        numeric: cfg.covariates.numeric.clone(),
        ..Default::default()
    };
    let mut m = encode_covariates(&cohort, &spec).unwrap();
    // re-add the constant column after pruning would have removed it
    let n = m.nrows();
    let mut values = Vec::new();
    for i in 0..n {
        values.extend_from_slice(m.row(i));
        values.push(0.9);
    }
    let mut cols = m.columns().to_vec();
    cols.push("state_esr".into());
    m = geosurv::data::DesignMatrix::new(cols, values, m.time().to_vec(), m.event().to_vec()).unwrap();
    let r = run_paired_fit(&m, &cfg, &["state_esr".to_string()], 0).unwrap();
    assert!(r.diff.abs() < 0.01, "diff {}", r.diff);
}

#[test]
fn planted_geography_improves_most_subsets() {
    let cfg = ExperimentConfig {
        bootstrap: BootstrapConfig {
            replicates: 200,
            ..Default::default()
        },
        ..Default::default()
    };
    let synth = SynthConfig {
        n_subjects: 50_000,
        geo_effect_scale: 1.0,
        seed: 91,
        ..Default::default()
    };
    let cohort = common::synth_cohort(&synth).sorted_by_id();
    let m = overall_matrix(&cohort, &cfg);
    let report = run_subset_ttest(&m, &cfg, &cfg.geo_feature_names(true), "Overall").unwrap();
    let positive = report.per_subset.iter().filter(|r| r.diff > 0.0).count();
    assert!(positive >= 24, "{positive}/30 positive");
    assert!(report.p < 0.05 && report.avg_improvement > 0.0);
}

#[test]
fn arms_are_independent() {
    let cfg = quick_cfg();
    let cohort = common::synth_cohort(&common::small_synth(3_000, 4)).sorted_by_id();
    let m = overall_matrix(&cohort, &cfg);
    let geo = cfg.geo_feature_names(true);
    let full = run_paired_fit(&m, &cfg, &geo, 3).unwrap();
    let keep: Vec<usize> = (0..m.ncols())
        .filter(|&j| !geosurv::experiment::is_geo_column(&m.columns()[j], &geo))
        .collect();
    let stripped = run_paired_fit(&m.select_columns(&keep), &cfg, &geo, 3).unwrap();
    assert_eq!(stripped.c_without, full.c_without);
    assert_eq!(stripped.c_with, full.c_without);
    assert_eq!(full.diff, full.c_with - full.c_without);
}

#[test]
fn ten_states_give_eleven_reports() {
    let synth = SynthConfig {
        n_subjects: 60_000,
        n_states: 10,
        censoring_target: 0.6,
        seed: 5,
        ..Default::default()
    };
    let cohort = common::synth_cohort(&synth);
    let out = run_statewise(&cohort, &quick_cfg()).unwrap();
    assert!(out.skipped.is_empty(), "{:?}", out.skipped);
    assert_eq!(out.reports.len(), 11);
    assert_eq!(out.reports[0].dataset_name, "Overall");
    assert!(out.reports.iter().all(|r| r.per_subset.len() == 10));
    // state datasets never carry state indicators
    assert!(out.reports[1..]
        .iter()
        .all(|r| r.geo_columns.iter().all(|c| !c.starts_with("state="))));
}

#[test]
fn single_state_has_no_state_indicators() {
    let synth = SynthConfig {
        n_subjects: 4_000,
        n_states: 1,
        censoring_target: 0.6,
        ..Default::default()
    };
    let out = run_statewise(&common::synth_cohort(&synth), &quick_cfg()).unwrap();
    assert_eq!(out.reports.len(), 2);
    let overall = &out.reports[0];
    assert!(overall.geo_columns.iter().all(|c| !c.starts_with("state=")));
    assert!(overall.geo_columns.contains(&"state_esr".to_string()));
}

#[test]
fn row_order_does_not_matter() {
    let synth = SynthConfig {
        censoring_target: 0.6,
        ..common::small_synth(3_000, 8)
    };
    let cohort = common::synth_cohort(&synth);
    let mut shuffled = cohort.subjects().to_vec();
    shuffled.shuffle(&mut common::rng(1));
    let permuted = common::cohort(shuffled);
    let cfg = quick_cfg();
    let a = run_statewise(&cohort, &cfg).unwrap();
    let b = run_statewise(&permuted, &cfg).unwrap();
    assert_eq!(a, b);
    // thread count does not matter either
    let c = run_statewise(&cohort, &ExperimentConfig { jobs: Some(1), ..cfg }).unwrap();
    assert_eq!(a, c);
}

#[test]
fn too_few_rows_is_an_error_and_small_states_are_skipped() {
    let cohort = common::synth_cohort(&common::small_synth(600, 2));
    let cfg = quick_cfg();
    let m = overall_matrix(&cohort, &cfg);
    assert!(run_subset_ttest(&m.select_rows(&(0..200).collect::<Vec<_>>()), &cfg, &[], "x").is_err());
    let out = run_statewise(&cohort, &ExperimentConfig { min_state_rows: Some(1_000), ..cfg }).unwrap();
    assert_eq!(out.skipped.len(), 3);
}

#[test]
fn report_round_trips() {
    let synth = SynthConfig {
        censoring_target: 0.6,
        ..common::small_synth(3_000, 9)
    };
    let out = run_statewise(&common::synth_cohort(&synth), &quick_cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    emit_report(&out.reports, &path).unwrap();
    let rows = read_report(std::fs::File::open(&path).unwrap(), &path).unwrap();
    let expected: Vec<ReportRow> = out.reports.iter().map(ReportRow::from).collect();
    assert_eq!(rows, expected);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), out.reports.len() + 1);

    let mut buf = Vec::new();
    write_per_subset(&out.reports, &mut buf).unwrap();
    let groups = read_per_subset(buf.as_slice(), std::path::Path::new("mem")).unwrap();
    assert_eq!(groups.len(), out.reports.len());
    for ((name, results), r) in groups.iter().zip(&out.reports) {
        assert_eq!(name, &r.dataset_name);
        assert_eq!(results, &r.per_subset);
    }
}

#[test]
fn emit_report_names_path_on_io_error() {
    let err = emit_report(&[], std::path::Path::new("/nonexistent/dir/report.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/report.csv"), "{err}");
}
