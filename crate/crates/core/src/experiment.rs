//! With/without-geography comparison over random sub-datasets.
//!
//! Each dataset (one per state plus an Overall run) is shuffled once and cut
//! into `n_subsets` equal subsets. Every subset gets its own train/test
//! split; both arms see the same rows, one with the geographic columns and
//! one without. The per-subset C-index differences feed a paired t-test and
//! a bootstrap interval.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{encode_covariates, split_indices, Cohort, DesignMatrix, EncodingSpec};
use crate::error::{Error, Result};
use crate::estimators::{cox_fit, weibull_ph_fit, CoxFitOptions, TieRule, WeibullFitOptions};
use crate::metrics::concordance_index;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{bootstrap_ci, mean, paired_t_test, BootstrapInterval};

pub const OVERALL: &str = "Overall";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Cox,
    Weibull,
}

/// Categorical and numeric feature names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSet {
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
}

impl FeatureSet {
    pub fn names(&self) -> Vec<String> {
        self.categorical.iter().chain(&self.numeric).cloned().collect()
    }

    fn extend(&mut self, other: &FeatureSet) {
        self.categorical.extend(other.categorical.iter().cloned());
        self.numeric.extend(other.numeric.iter().cloned());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            replicates: 2000,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Non-geographic covariates, present in both arms.
    pub covariates: FeatureSet,
    /// Geographic features, present only in the with-geo arm.
    pub geo: FeatureSet,
    /// Extra geographic features for the Overall run.
    pub overall_geo: FeatureSet,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub penalizer: f64,
    pub n_subsets: usize,
    pub model_kind: ModelKind,
    pub ties: TieRule,
    pub subset_seed: u64,
    pub bootstrap: BootstrapConfig,
    /// States with fewer rows are skipped. Defaults to `30 * n_subsets`.
    pub min_state_rows: Option<usize>,
    pub include_overall: bool,
    /// Cap on concurrently processed datasets.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            covariates: FeatureSet {
                categorical: vec!["sex".into(), "race".into(), "grade".into()],
                numeric: vec!["age".into(), "treatment".into()],
            },
            geo: FeatureSet {
                categorical: vec!["reporting_source".into()],
                numeric: vec![crate::geo::STATE_ESR.into()],
            },
            overall_geo: FeatureSet {
                categorical: vec!["state".into()],
                numeric: vec![],
            },
            test_fraction: 0.2,
            split_seed: 101,
            penalizer: 1e-4,
            n_subsets: 30,
            model_kind: ModelKind::Cox,
            ties: TieRule::Efron,
            subset_seed: 7,
            bootstrap: BootstrapConfig::default(),
            min_state_rows: None,
            include_overall: true,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subsets < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_subsets must be at least 2, got {}",
                self.n_subsets
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        Ok(())
    }

    pub fn min_rows(&self) -> usize {
        self.min_state_rows.unwrap_or(30 * self.n_subsets)
    }

    /// Geographic feature names for a state run or the Overall run.
    pub fn geo_feature_names(&self, overall: bool) -> Vec<String> {
        let mut names = self.geo.names();
        if overall {
            names.extend(self.overall_geo.names());
        }
        names
    }

    fn encoding(&self, overall: bool) -> EncodingSpec {
        let mut set = self.covariates.clone();
        set.extend(&self.geo);
        if overall {
            set.extend(&self.overall_geo);
        }
        EncodingSpec {
            categorical: set.categorical,
            numeric: set.numeric,
            ..Default::default()
        }
    }
}

/// True when design column `column` was produced by one of `features`
/// (`name` itself, or a `name=level` indicator).
pub fn is_geo_column(column: &str, features: &[String]) -> bool {
    features.iter().any(|f| {
        column == f
            || column
                .strip_prefix(f.as_str())
                .is_some_and(|rest| rest.starts_with('='))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedRunResult {
    pub subset_id: usize,
    pub rows: usize,
    pub c_with: f64,
    pub c_without: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset_name: String,
    pub rows_per_subset: usize,
    pub per_subset: Vec<PairedRunResult>,
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub ci: BootstrapInterval,
    pub avg_improvement: f64,
    /// Design columns treated as geographic.
    pub geo_columns: Vec<String>,
}

fn has_comparable_pair(m: &DesignMatrix) -> bool {
    let latest = m.time().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m.time().iter().zip(m.event()).any(|(&t, &e)| e && t < latest)
}

/// Test-set C-index of a model fitted on `train`. Columns constant on the
/// training rows are dropped first.
fn fit_arm(train: &DesignMatrix, test: &DesignMatrix, cfg: &ExperimentConfig) -> Result<f64> {
    let keep: Vec<usize> = (0..train.ncols())
        .filter(|&j| !train.is_constant_column(j))
        .collect();
    let train = train.select_columns(&keep);
    let test = test.select_columns(&keep);
    let risk: Vec<f64> = match cfg.model_kind {
        ModelKind::Cox => {
            let opts = CoxFitOptions {
                penalizer: cfg.penalizer,
                ties: cfg.ties,
                ..Default::default()
            };
            let model = cox_fit(&train, &opts)?;
            (0..test.nrows()).map(|i| model.linear_predictor(test.row(i))).collect()
        }
        ModelKind::Weibull => {
            let model = weibull_ph_fit(&train, &WeibullFitOptions::default())?;
            (0..test.nrows()).map(|i| model.linear_predictor(test.row(i))).collect()
        }
    };
    Ok(concordance_index(test.time(), test.event(), &risk)?.c)
}

fn tag(arm: &'static str, subset: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Arm {
        dataset: String::new(),
        subset,
        arm,
        source: Box::new(e),
    }
}

/// Paired fit with an explicit split seed. Fails with
/// [`Error::DegenerateSubset`] when the split has no training event or no
/// comparable test pair.
pub fn run_paired_fit_seeded(
    m: &DesignMatrix,
    cfg: &ExperimentConfig,
    geo_features: &[String],
    subset_id: usize,
    seed: u64,
) -> Result<PairedRunResult> {
    cfg.validate()?;
    let (train_idx, test_idx) = split_indices(m.nrows(), cfg.test_fraction, seed)?;
    let train = m.select_rows(&train_idx);
    let test = m.select_rows(&test_idx);
    if train.n_events() == 0 {
        return Err(Error::DegenerateSubset {
            subset: subset_id,
            reason: "no events in the training rows".into(),
        });
    }
    if !has_comparable_pair(&test) {
        return Err(Error::DegenerateSubset {
            subset: subset_id,
            reason: "no comparable pairs in the test rows".into(),
        });
    }
    let without: Vec<usize> = (0..m.ncols())
        .filter(|&j| !is_geo_column(&m.columns()[j], geo_features))
        .collect();
    let c_with = fit_arm(&train, &test, cfg).map_err(tag("with_geo", subset_id))?;
    let c_without = fit_arm(
        &train.select_columns(&without),
        &test.select_columns(&without),
        cfg,
    )
    .map_err(tag("without_geo", subset_id))?;
    Ok(PairedRunResult {
        subset_id,
        rows: m.nrows(),
        c_with,
        c_without,
        diff: crate::stats::c_index_diff(c_with, c_without),
    })
}

/// Paired fit on one subset using the split seed derived from
/// `(split_seed, subset_id)`. A degenerate split is redrawn once.
pub fn run_paired_fit(
    m: &DesignMatrix,
    cfg: &ExperimentConfig,
    geo_features: &[String],
    subset_id: usize,
) -> Result<PairedRunResult> {
    let seed = derive_seed(cfg.split_seed, subset_id as u64);
    match run_paired_fit_seeded(m, cfg, geo_features, subset_id, seed) {
        Err(Error::DegenerateSubset { .. }) => {
            log::debug!("subset {subset_id} degenerate, redrawing split");
            run_paired_fit_seeded(m, cfg, geo_features, subset_id, derive_seed(seed, 1))
        }
        other => other,
    }
}

/// Splits `0..n` into `k` disjoint subsets of `n / k` rows from one seeded
/// shuffle. The `n % k` leftover rows are not used. Each subset is sorted.
pub fn subset_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let size = n / k.max(1);
    (0..k)
        .map(|i| {
            let mut s = order[i * size..(i + 1) * size].to_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

fn with_dataset(e: Error, name: &str) -> Error {
    match e {
        Error::Arm {
            subset, arm, source, ..
        } => Error::Arm {
            dataset: name.to_string(),
            subset,
            arm,
            source,
        },
        other => other,
    }
}

/// Subset experiment on one dataset.
pub fn run_subset_ttest(
    m: &DesignMatrix,
    cfg: &ExperimentConfig,
    geo_features: &[String],
    dataset_name: &str,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let need = cfg.n_subsets * 30;
    if m.nrows() < need {
        return Err(Error::InvalidArgument(format!(
            "{dataset_name}: {} rows, need at least {need} for {} subsets",
            m.nrows(),
            cfg.n_subsets
        )));
    }
    let subsets = subset_partition(m.nrows(), cfg.n_subsets, cfg.subset_seed);
    let per_subset = subsets
        .par_iter()
        .enumerate()
        .map(|(id, rows)| run_paired_fit(&m.select_rows(rows), cfg, geo_features, id))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| with_dataset(e, dataset_name))?;
    report_from_results(dataset_name, per_subset, cfg, geo_columns(m, geo_features))
}

fn geo_columns(m: &DesignMatrix, geo_features: &[String]) -> Vec<String> {
    m.columns()
        .iter()
        .filter(|c| is_geo_column(c, geo_features))
        .cloned()
        .collect()
}

/// Paired t-test and bootstrap interval over per-subset results.
pub fn report_from_results(
    dataset_name: &str,
    per_subset: Vec<PairedRunResult>,
    cfg: &ExperimentConfig,
    geo_columns: Vec<String>,
) -> Result<ExperimentReport> {
    let with: Vec<f64> = per_subset.iter().map(|r| r.c_with).collect();
    let without: Vec<f64> = per_subset.iter().map(|r| r.c_without).collect();
    let diffs: Vec<f64> = per_subset.iter().map(|r| r.diff).collect();
    let test = paired_t_test(&with, &without).map_err(|e| match e {
        Error::ZeroVariance => Error::InvalidArgument(format!(
            "{dataset_name}: C-index differences have zero variance (geo columns carry no information)"
        )),
        other => other,
    })?;
    let ci = bootstrap_ci(
        &diffs,
        cfg.bootstrap.level,
        cfg.bootstrap.replicates,
        cfg.bootstrap.seed,
    )?;
    Ok(ExperimentReport {
        dataset_name: dataset_name.to_string(),
        rows_per_subset: per_subset.first().map_or(0, |r| r.rows),
        t: test.t_statistic,
        p: test.p_value,
        df: test.df,
        ci,
        avg_improvement: mean(&diffs),
        per_subset,
        geo_columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDataset {
    pub dataset_name: String,
    pub rows: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatewiseOutcome {
    /// Overall first, then states in name order.
    pub reports: Vec<ExperimentReport>,
    pub skipped: Vec<SkippedDataset>,
}

enum Task {
    Overall(Cohort),
    State(String, Cohort),
}

/// Overall run plus one run per state. The state label is not a feature
/// inside a state's own dataset. Results do not depend on cohort row order
/// or on the number of worker threads.
pub fn run_statewise(cohort: &Cohort, cfg: &ExperimentConfig) -> Result<StatewiseOutcome> {
    cfg.validate()?;
    let cohort = cohort.sorted_by_id();
    let mut tasks = Vec::new();
    if cfg.include_overall {
        tasks.push(Task::Overall(cohort.clone()));
    }
    let mut states: BTreeMap<&str, ()> = BTreeMap::new();
    for s in cohort.subjects() {
        states.insert(s.state.as_str(), ());
    }
    for state in states.keys() {
        tasks.push(Task::State(
            state.to_string(),
            cohort.filter(|s| s.state == *state),
        ));
    }

    let run = || {
        tasks
            .par_iter()
            .map(|task| {
                let (name, sub, overall) = match task {
                    Task::Overall(c) => (OVERALL.to_string(), c, true),
                    Task::State(name, c) => (name.clone(), c, false),
                };
                if !overall && sub.len() < cfg.min_rows() {
                    log::info!("skipping {name}: {} rows", sub.len());
                    return Ok(Err(SkippedDataset {
                        reason: format!("fewer than {} rows", cfg.min_rows()),
                        dataset_name: name,
                        rows: sub.len(),
                    }));
                }
                let m = encode_covariates(sub, &cfg.encoding(overall))?;
                log::info!("{name}: {} rows, {} columns", m.nrows(), m.ncols());
                let geo = cfg.geo_feature_names(overall);
                match run_subset_ttest(&m, cfg, &geo, &name) {
                    Err(Error::DegenerateSubset { subset, reason }) if !overall => {
                        log::warn!("skipping {name}: subset {subset} degenerate after redraw");
                        Ok(Err(SkippedDataset {
                            dataset_name: name,
                            rows: sub.len(),
                            reason: format!("subset {subset} degenerate after redraw: {reason}"),
                        }))
                    }
                    other => other.map(Ok),
                }
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let mut outcome = StatewiseOutcome {
        reports: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(report) => outcome.reports.push(report),
            Err(skip) => outcome.skipped.push(skip),
        }
    }
    Ok(outcome)
}

pub const REPORT_HEADER: [&str; 7] = [
    "dataset_name",
    "rows_per_subset",
    "t_statistic",
    "p_value",
    "ci_lo",
    "ci_hi",
    "avg_c_index_improvement",
];

/// One parsed line of a report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset_name: String,
    pub rows_per_subset: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub avg_c_index_improvement: f64,
}

impl From<&ExperimentReport> for ReportRow {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            dataset_name: r.dataset_name.clone(),
            rows_per_subset: r.rows_per_subset,
            t_statistic: r.t,
            p_value: r.p,
            ci_lo: r.ci.lo,
            ci_hi: r.ci.hi,
            avg_c_index_improvement: r.avg_improvement,
        }
    }
}

/// Writes the summary table. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_report<W: Write>(reports: &[ExperimentReport], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e: csv::Error| Error::csv("<report>", e);
    w.write_record(REPORT_HEADER).map_err(err)?;
    for r in reports {
        w.serialize(ReportRow::from(r)).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))
}

pub fn emit_report(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(reports, file).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

pub fn read_report<R: Read>(reader: R, source: &Path) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(source, e)))
        .collect()
}

/// One line of the per-subset audit CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSubsetRow {
    pub dataset: String,
    pub subset_id: usize,
    pub c_with: f64,
    pub c_without: f64,
    pub diff: f64,
    pub rows: usize,
}

pub fn write_per_subset<W: Write>(reports: &[ExperimentReport], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e: csv::Error| Error::csv("<per_subset>", e);
    w.write_record(["dataset", "subset_id", "c_with", "c_without", "diff", "rows"])
        .map_err(err)?;
    for r in reports {
        for s in &r.per_subset {
            w.serialize(PerSubsetRow {
                dataset: r.dataset_name.clone(),
                subset_id: s.subset_id,
                c_with: s.c_with,
                c_without: s.c_without,
                diff: s.diff,
                rows: s.rows,
            })
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<per_subset>", e))
}

pub fn emit_per_subset(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_per_subset(reports, file).map_err(|e| relabel(e, path))
}

/// Groups per-subset rows by dataset, keeping first-appearance order.
pub fn read_per_subset<R: Read>(reader: R, source: &Path) -> Result<Vec<(String, Vec<PairedRunResult>)>> {
    let mut out: Vec<(String, Vec<PairedRunResult>)> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize::<PerSubsetRow>() {
        let row = row.map_err(|e| Error::csv(source, e))?;
        let result = PairedRunResult {
            subset_id: row.subset_id,
            rows: row.rows,
            c_with: row.c_with,
            c_without: row.c_without,
            diff: row.diff,
        };
        match out.iter_mut().find(|(name, _)| *name == row.dataset) {
            Some((_, v)) => v.push(result),
            None => out.push((row.dataset, vec![result])),
        }
    }
    Ok(out)
}
