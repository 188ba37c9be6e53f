//! Command implementations behind the `geosurv` binary.
//!
//! Each command reads JSON config and CSV inputs, writes its outputs into a
//! directory (created if needed) and returns a one-line summary. Numeric
//! parameters live in config files; the only flag-level overrides are seeds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_json, read_json, write_json};
use crate::data::{
    clean_cohort, encode_covariates, load_cohort_inferred, save_cohort, CleaningRules, Cohort,
    CodingDictionary, EncodingSpec,
};
use crate::error::{Error, Result};
use crate::estimators::{
    cox_fit, weibull_ph_fit, write_coefficients_csv, CoxFitOptions, CoxModel, TieRule,
    WeibullFitOptions, WeibullPhModel,
};
use crate::experiment::{
    emit_per_subset, emit_report, read_per_subset, report_from_results, run_statewise,
    ExperimentConfig, FeatureSet, ModelKind, SkippedDataset,
};
use crate::geo::{attach_state_esr, check_states, AttachPolicy, ExpectedSurvivalTable, PopulationTable};
use crate::metrics::concordance_index;
use crate::synth::{generate_cohort, generate_tables, SynthConfig, SynthTables};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Config {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("unsupported schema_version {found}, expected {SCHEMA_VERSION}"),
        });
    }
    Ok(())
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Deserialize)]
struct Version {
    #[serde(default = "default_version")]
    schema_version: u32,
}

/// Reads a config whose top level mixes several structs. Each part is
/// parsed from the same text on its own so that errors keep their line and
/// column (serde's flatten loses them).
fn read_versioned<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(String, T)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Version = parse_json(&text, path)?;
    check_version(v.schema_version, path)?;
    let value = parse_json(&text, path)?;
    Ok((text, value))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Relative paths in a config resolve against the config's directory.
fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

// ---------------------------------------------------------------- synth

/// Synth config file: `schema_version` plus the [`SynthConfig`] fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub synth: SynthConfig,
}

impl SynthFile {
    pub fn load(path: &Path) -> Result<SynthFile> {
        let (_, synth) = read_versioned(path)?;
        Ok(SynthFile {
            schema_version: SCHEMA_VERSION,
            synth,
        })
    }
}

pub fn write_tables(tables: &SynthTables, out_dir: &Path) -> Result<()> {
    let pop = out_dir.join("population.csv");
    tables.population.write_csv(create(&pop)?)?;
    let esr = out_dir.join("esr.csv");
    tables.esr.write_csv(create(&esr)?)
}

/// Writes `cohort.csv`, `population.csv`, `esr.csv` and `truth.json`.
/// Without a config file the defaults are used.
pub fn cmd_synth(config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<String> {
    let mut cfg = match config {
        Some(path) => SynthFile::load(path)?.synth,
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    create_dir(out_dir)?;
    let tables = generate_tables(&cfg)?;
    let (cohort, truth) = generate_cohort(&cfg, &tables)?;
    save_cohort(&cohort, &out_dir.join("cohort.csv"))?;
    write_tables(&tables, out_dir)?;
    write_json(&truth, &out_dir.join("truth.json"))?;
    Ok(format!(
        "synth: {} subjects, {} events, censored fraction {:.4}, {} counties -> {}",
        cohort.len(),
        truth.n_events,
        truth.realized_censoring_fraction,
        tables.county_offsets.len(),
        out_dir.display()
    ))
}

// ------------------------------------------------------------- features

/// Attaches `state_esr` and writes `cohort_with_esr.csv` plus
/// `attach_report.csv`. Under the abort policy the report is still written
/// before the error is returned.
pub fn cmd_features(
    cohort: &Path,
    population: &Path,
    esr: &Path,
    out_dir: &Path,
    policy: AttachPolicy,
) -> Result<String> {
    let c = load_cohort_inferred(cohort)?;
    let pop = PopulationTable::load(population)?;
    let table = ExpectedSurvivalTable::load(esr)?;
    check_states(&c, &pop)?;
    create_dir(out_dir)?;
    let report_path = out_dir.join("attach_report.csv");
    match attach_state_esr(&c, &table, &pop, policy) {
        Ok((attached, report)) => {
            report.write_csv(create(&report_path)?)?;
            save_cohort(&attached, &out_dir.join("cohort_with_esr.csv"))?;
            Ok(format!(
                "features: {} of {} subjects with state_esr, {} dropped -> {}",
                attached.len(),
                c.len(),
                report.failures(),
                out_dir.display()
            ))
        }
        Err(Error::AttachAborted { failures, report }) => {
            report.write_csv(create(&report_path)?)?;
            Err(Error::AttachAborted { failures, report })
        }
        Err(e) => Err(e),
    }
}

// ------------------------------------------------------------------ fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitFile {
    pub schema_version: u32,
    pub covariates: FeatureSet,
    pub model_kind: ModelKind,
    pub penalizer: f64,
    pub ties: TieRule,
    pub cleaning: CleaningRules,
}

impl Default for FitFile {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        let mut covariates = exp.covariates;
        covariates.categorical.extend(exp.geo.categorical);
        covariates.numeric.extend(exp.geo.numeric);
        Self {
            schema_version: SCHEMA_VERSION,
            covariates,
            model_kind: ModelKind::Cox,
            penalizer: exp.penalizer,
            ties: TieRule::Efron,
            cleaning: CleaningRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Cox(CoxModel),
    Weibull(WeibullPhModel),
}

impl FittedModel {
    pub fn column_names(&self) -> &[String] {
        match self {
            FittedModel::Cox(m) => &m.column_names,
            FittedModel::Weibull(m) => &m.column_names,
        }
    }

    pub fn beta(&self) -> &[f64] {
        match self {
            FittedModel::Cox(m) => &m.beta,
            FittedModel::Weibull(m) => &m.beta,
        }
    }

    /// Relative risk score; higher means earlier expected failure.
    pub fn risk(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Cox(m) => m.linear_predictor(x),
            FittedModel::Weibull(m) => m.linear_predictor(x),
        }
    }
}

/// Everything `eval` needs to score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub schema_version: u32,
    pub covariates: FeatureSet,
    pub dictionary: CodingDictionary,
    pub model: FittedModel,
}

/// Cleans, encodes and fits; writes `model.json`, `coefficients.csv`,
/// `coding.json` and `cleaning_report.csv`.
pub fn cmd_fit(cohort: &Path, config: Option<&Path>, out_dir: &Path) -> Result<String> {
    let cfg: FitFile = match config {
        Some(path) => {
            let f: FitFile = read_json(path)?;
            check_version(f.schema_version, path)?;
            f
        }
        None => FitFile::default(),
    };
    let raw = load_cohort_inferred(cohort)?;
    let (clean, cleaning) = clean_cohort(&raw, &cfg.cleaning);
    create_dir(out_dir)?;
    cleaning.write_csv(create(&out_dir.join("cleaning_report.csv"))?)?;
    let m = encode_covariates(
        &clean,
        &EncodingSpec {
            categorical: cfg.covariates.categorical.clone(),
            numeric: cfg.covariates.numeric.clone(),
            ..Default::default()
        },
    )?;
    let model = match cfg.model_kind {
        ModelKind::Cox => FittedModel::Cox(cox_fit(
            &m,
            &CoxFitOptions {
                penalizer: cfg.penalizer,
                ties: cfg.ties,
                ..Default::default()
            },
        )?),
        ModelKind::Weibull => FittedModel::Weibull(weibull_ph_fit(&m, &WeibullFitOptions::default())?),
    };
    write_coefficients_csv(model.column_names(), model.beta(), create(&out_dir.join("coefficients.csv"))?)?;
    write_json(&m.dictionary.codes(), &out_dir.join("coding.json"))?;
    let saved = SavedModel {
        schema_version: SCHEMA_VERSION,
        covariates: cfg.covariates,
        dictionary: m.dictionary.clone(),
        model,
    };
    write_json(&saved, &out_dir.join("model.json"))?;
    Ok(format!(
        "fit: {} rows ({} dropped by cleaning), {} columns, {} events -> {}",
        m.nrows(),
        cleaning.dropped_rows(),
        m.ncols(),
        m.n_events(),
        out_dir.display()
    ))
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rows: usize,
    pub c_index: f64,
    pub concordant: u64,
    pub tied_score: u64,
    pub discordant: u64,
    pub comparable: u64,
}

/// Scores `cohort` with a saved model; writes `risk_scores.csv` and
/// `eval.json`. Levels unseen at fit time are an error.
pub fn cmd_eval(model_path: &Path, cohort: &Path, out_dir: &Path) -> Result<String> {
    let saved: SavedModel = read_json(model_path)?;
    check_version(saved.schema_version, model_path)?;
    let c = load_cohort_inferred(cohort)?;
    let m = encode_covariates(
        &c,
        &EncodingSpec {
            categorical: saved.covariates.categorical.clone(),
            numeric: saved.covariates.numeric.clone(),
            frozen: Some(saved.dictionary.clone()),
            skip_pruning: true,
        },
    )?;
    let cols: Vec<usize> = saved
        .model
        .column_names()
        .iter()
        .map(|name| {
            m.column_index(name).ok_or_else(|| Error::MissingFeature {
                feature: name.clone(),
                subject: "<all>".into(),
            })
        })
        .collect::<Result<_>>()?;
    let m = m.select_columns(&cols);
    let risk: Vec<f64> = (0..m.nrows()).map(|i| saved.model.risk(m.row(i))).collect();
    create_dir(out_dir)?;
    let path = out_dir.join("risk_scores.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["id", "risk", "time", "event"])
        .map_err(|e| Error::csv(&path, e))?;
    for i in 0..m.nrows() {
        w.write_record([
            m.row_ids()[i].clone(),
            risk[i].to_string(),
            m.time()[i].to_string(),
            u8::from(m.event()[i]).to_string(),
        ])
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let ci = concordance_index(m.time(), m.event(), &risk)?;
    let summary = EvalSummary {
        rows: m.nrows(),
        c_index: ci.c,
        concordant: ci.concordant,
        tied_score: ci.tied_score,
        discordant: ci.discordant,
        comparable: ci.num,
    };
    write_json(&summary, &out_dir.join("eval.json"))?;
    Ok(format!(
        "eval: C-index {:.4} over {} comparable pairs ({} rows)",
        ci.c, ci.num, summary.rows
    ))
}

// ----------------------------------------------------------- experiment

/// Input files for an experiment. The cohort may already carry
/// `state_esr`; otherwise both tables are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub cohort: PathBuf,
    #[serde(default)]
    pub population: Option<PathBuf>,
    #[serde(default)]
    pub esr: Option<PathBuf>,
}

/// Experiment config file: the [`ExperimentConfig`] fields at top level,
/// plus the inputs. Exactly one of `data` and `synth` supplies the cohort.
/// A run manifest is itself a valid experiment file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub data: Option<DataPaths>,
    pub synth: Option<SynthConfig>,
    pub cleaning: CleaningRules,
    pub attach: AttachPolicy,
}

#[derive(Deserialize)]
struct Inputs {
    #[serde(default)]
    data: Option<DataPaths>,
    #[serde(default)]
    synth: Option<SynthConfig>,
    #[serde(default)]
    cleaning: CleaningRules,
    #[serde(default)]
    attach: AttachPolicy,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<ExperimentFile> {
        let (text, experiment) = read_versioned::<ExperimentConfig>(path)?;
        let inputs: Inputs = parse_json(&text, path)?;
        Ok(ExperimentFile {
            schema_version: SCHEMA_VERSION,
            experiment,
            data: inputs.data,
            synth: inputs.synth,
            cleaning: inputs.cleaning,
            attach: inputs.attach,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedOverrides {
    pub synth_seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub subset_seed: Option<u64>,
    pub bootstrap_seed: Option<u64>,
}

impl SeedOverrides {
    fn apply(&self, f: &mut ExperimentFile) {
        if let (Some(seed), Some(s)) = (self.synth_seed, f.synth.as_mut()) {
            s.seed = seed;
        }
        if let Some(seed) = self.split_seed {
            f.experiment.split_seed = seed;
        }
        if let Some(seed) = self.subset_seed {
            f.experiment.subset_seed = seed;
        }
        if let Some(seed) = self.bootstrap_seed {
            f.experiment.bootstrap.seed = seed;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool_version: String,
    pub config_sha256: String,
    /// `ok`, or `failed: <error>` when outputs are partial.
    pub status: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputFile>,
    pub reports: Vec<String>,
    pub skipped: Vec<SkippedDataset>,
    pub rows_after_cleaning: usize,
}

fn seeds(f: &ExperimentFile) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::from([
        ("split_seed".to_string(), f.experiment.split_seed),
        ("subset_seed".to_string(), f.experiment.subset_seed),
        ("bootstrap_seed".to_string(), f.experiment.bootstrap.seed),
    ]);
    if let Some(synth) = &f.synth {
        s.insert("synth_seed".to_string(), synth.seed);
    }
    s
}

fn write_manifest(file: &ExperimentFile, run: &RunInfo, out_dir: &Path) -> Result<()> {
    let mut value = serde_json::to_value(file)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("run".to_string(), serde_json::to_value(run)?);
    }
    write_json(&value, &out_dir.join("manifest.json"))
}

/// Loads or generates the cohort and attaches `state_esr` when needed.
fn prepare_cohort(
    file: &ExperimentFile,
    config_path: Option<&Path>,
    out_dir: &Path,
    inputs: &mut Vec<InputFile>,
) -> Result<Cohort> {
    match (&file.data, &file.synth) {
        (Some(data), None) => {
            let cohort_path = resolve(config_path, &data.cohort);
            inputs.push(InputFile {
                sha256: file_sha256(&cohort_path)?,
                path: data.cohort.clone(),
            });
            let cohort = load_cohort_inferred(&cohort_path)?;
            let has_esr = cohort
                .subjects()
                .iter()
                .all(|s| s.numeric.contains_key(crate::geo::STATE_ESR));
            match (&data.population, &data.esr) {
                (Some(p), Some(e)) => {
                    let (pp, ep) = (resolve(config_path, p), resolve(config_path, e));
                    for (orig, full) in [(p, &pp), (e, &ep)] {
                        inputs.push(InputFile {
                            sha256: file_sha256(full)?,
                            path: orig.clone(),
                        });
                    }
                    let pop = PopulationTable::load(&pp)?;
                    let table = ExpectedSurvivalTable::load(&ep)?;
                    check_states(&cohort, &pop)?;
                    attach(&cohort, &table, &pop, file.attach, out_dir)
                }
                _ if has_esr => Ok(cohort),
                _ => Err(Error::InvalidArgument(
                    "cohort has no state_esr column and no population/esr tables were given".into(),
                )),
            }
        }
        (None, Some(synth)) => {
            let tables = generate_tables(synth)?;
            let (cohort, _) = generate_cohort(synth, &tables)?;
            attach(&cohort, &tables.esr, &tables.population, file.attach, out_dir)
        }
        _ => Err(Error::InvalidArgument(
            "experiment config needs exactly one of `data` and `synth`".into(),
        )),
    }
}

fn attach(
    cohort: &Cohort,
    esr: &ExpectedSurvivalTable,
    pop: &PopulationTable,
    policy: AttachPolicy,
    out_dir: &Path,
) -> Result<Cohort> {
    let path = out_dir.join("attach_report.csv");
    match attach_state_esr(cohort, esr, pop, policy) {
        Ok((c, report)) => {
            report.write_csv(create(&path)?)?;
            Ok(c)
        }
        Err(Error::AttachAborted { failures, report }) => {
            report.write_csv(create(&path)?)?;
            Err(Error::AttachAborted { failures, report })
        }
        Err(e) => Err(e),
    }
}

/// Full protocol: cohort, cleaning, StateESR, Overall and per-state subset
/// experiments. Writes `report.csv`, `per_subset.csv` and `manifest.json`
/// (plus `attach_report.csv` and `cleaning_report.csv`). On failure the
/// manifest records the error.
pub fn cmd_experiment(config: &Path, out_dir: &Path, overrides: &SeedOverrides) -> Result<String> {
    let mut file = ExperimentFile::load(config)?;
    overrides.apply(&mut file);
    file.experiment.validate()?;
    create_dir(out_dir)?;
    let config_sha256 = sha256_hex(serde_json::to_string(&file)?.as_bytes());
    let mut run = RunInfo {
        tool_version: TOOL_VERSION.to_string(),
        config_sha256,
        status: "running".into(),
        seeds: seeds(&file),
        inputs: Vec::new(),
        reports: Vec::new(),
        skipped: Vec::new(),
        rows_after_cleaning: 0,
    };
    let result = run_experiment(&file, config, out_dir, &mut run);
    run.status = match &result {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    };
    write_manifest(&file, &run, out_dir)?;
    result
}

fn run_experiment(
    file: &ExperimentFile,
    config: &Path,
    out_dir: &Path,
    run: &mut RunInfo,
) -> Result<String> {
    let cohort = prepare_cohort(file, Some(config), out_dir, &mut run.inputs)?;
    let (cohort, cleaning) = clean_cohort(&cohort, &file.cleaning);
    cleaning.write_csv(create(&out_dir.join("cleaning_report.csv"))?)?;
    run.rows_after_cleaning = cohort.len();
    let outcome = run_statewise(&cohort, &file.experiment)?;
    emit_report(&outcome.reports, &out_dir.join("report.csv"))?;
    emit_per_subset(&outcome.reports, &out_dir.join("per_subset.csv"))?;
    run.reports = outcome.reports.iter().map(|r| r.dataset_name.clone()).collect();
    run.skipped = outcome.skipped.clone();
    let headline = outcome
        .reports
        .iter()
        .find(|r| r.dataset_name == crate::experiment::OVERALL)
        .or(outcome.reports.first())
        .map(|r| {
            format!(
                "; {} t={:.3} p={:.3e} avg improvement {:.4}",
                r.dataset_name, r.t, r.p, r.avg_improvement
            )
        })
        .unwrap_or_default();
    Ok(format!(
        "experiment: {} datasets, {} skipped{headline} -> {}",
        outcome.reports.len(),
        outcome.skipped.len(),
        out_dir.display()
    ))
}

// --------------------------------------------------------------- report

/// Rebuilds `report.csv` from a per-subset CSV. Test and bootstrap settings
/// come from the experiment config (defaults when absent).
pub fn cmd_report(per_subset: &Path, config: Option<&Path>, out_dir: &Path) -> Result<String> {
    let cfg = match config {
        Some(path) => ExperimentFile::load(path)?.experiment,
        None => ExperimentConfig::default(),
    };
    let file = File::open(per_subset).map_err(|e| Error::io(per_subset, e))?;
    let groups = read_per_subset(file, per_subset)?;
    let reports = groups
        .into_iter()
        .map(|(name, results)| report_from_results(&name, results, &cfg, Vec::new()))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out_dir)?;
    emit_report(&reports, &out_dir.join("report.csv"))?;
    Ok(format!(
        "report: {} datasets -> {}",
        reports.len(),
        out_dir.join("report.csv").display()
    ))
}
