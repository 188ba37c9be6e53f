//! Synthetic registry-shaped cohorts with matching population and life
//! tables and known ground truth.
//!
//! Each county gets a hidden log-hazard offset `o_c = geo_effect_scale * z_c`
//! with `z_c = u_state + v_county`. The same offset lowers the county's
//! life-table ESR cells and raises the hazard of its residents, so the
//! geography is internally consistent and StateESR is an aggregate proxy
//! for it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Age, Censoring, Cohort, Subject};
use crate::error::{Error, Result};
use crate::geo::{ExpectedSurvivalTable, PopulationTable, Profile};
use crate::rng::task_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    /// Constant hazard per month.
    Exponential { rate: f64 },
    /// `H0(t) = (t / scale)^shape`.
    Weibull { shape: f64, scale: f64 },
}

impl Baseline {
    /// Event time with hazard multiplier `mult` from a unit exponential draw.
    fn event_time(&self, e: f64, mult: f64) -> f64 {
        match *self {
            Baseline::Exponential { rate } => e / (rate * mult),
            Baseline::Weibull { shape, scale } => scale * (e / mult).powf(1.0 / shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_states: usize,
    /// Inclusive range of counties per state.
    pub counties_per_state: (usize, usize),
    /// Log-hazard coefficients. Keys are numeric covariates (`treatment`,
    /// `age` centred at `age_center`) or `feature=level` indicators.
    pub true_beta: BTreeMap<String, f64>,
    pub geo_effect_scale: f64,
    /// Standard deviation of the county deviation around its state effect.
    pub county_spread: f64,
    pub censoring_target: f64,
    pub baseline: Baseline,
    /// Administrative censoring horizon in months.
    pub admin_censor_horizon: f64,
    pub seed: u64,
    pub ages: (u32, u32),
    pub age_center: f64,
    pub years: (i32, i32),
    pub sexes: Vec<String>,
    pub races: Vec<String>,
    pub grades: Vec<String>,
    pub reporting_sources: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 20_000,
            n_states: 5,
            counties_per_state: (3, 6),
            true_beta: BTreeMap::from([
                ("treatment".to_string(), -0.5),
                ("grade=G2".to_string(), 0.3),
                ("grade=G3".to_string(), 0.6),
                ("age".to_string(), 0.03),
            ]),
            geo_effect_scale: 0.5,
            county_spread: 0.5,
            censoring_target: 0.88,
            baseline: Baseline::Exponential { rate: 0.005 },
            admin_censor_horizon: 216.0,
            seed: 2024,
            ages: (40, 84),
            age_center: 60.0,
            years: (2005, 2014),
            sexes: vec!["F".into(), "M".into()],
            races: vec!["black".into(), "other".into(), "white".into()],
            grades: vec!["G1".into(), "G2".into(), "G3".into()],
            reporting_sources: vec!["hospital".into(), "lab".into(), "physician".into()],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.censoring_target > 0.0 && self.censoring_target < 1.0) {
            return bad(format!("censoring_target {} outside (0, 1)", self.censoring_target));
        }
        if self.n_states == 0 {
            return bad("n_states must be at least 1".into());
        }
        let (lo, hi) = self.counties_per_state;
        if lo == 0 || lo > hi {
            return bad(format!("invalid counties_per_state ({lo}, {hi})"));
        }
        if self.ages.0 > self.ages.1 || self.years.0 > self.years.1 {
            return bad("empty age or year range".into());
        }
        if self.sexes.is_empty() || self.races.is_empty() || self.grades.is_empty() {
            return bad("sexes, races and grades need at least one level".into());
        }
        if self.reporting_sources.is_empty() {
            return bad("reporting_sources needs at least one level".into());
        }
        Ok(())
    }

    fn state_code(i: usize) -> String {
        format!("S{:02}", i + 1)
    }
}

/// Generated tables plus the hidden geography.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTables {
    pub population: PopulationTable,
    pub esr: ExpectedSurvivalTable,
    /// Hidden county log-hazard offsets.
    pub county_offsets: BTreeMap<String, f64>,
    pub county_state: BTreeMap<String, String>,
    /// Per-county probabilities over `reporting_sources`.
    pub reporting_mix: BTreeMap<String, Vec<f64>>,
}

const BASE_ANNUAL_LOG_HAZARD: f64 = -4.42; // about 1.2% annual mortality at the centre age
const AGE_SLOPE: f64 = 0.085;
const YEAR_TREND: f64 = -0.01;

fn demographic_log_hazard(cfg: &SynthConfig, p: &Profile) -> f64 {
    let sex = cfg.sexes.iter().position(|s| *s == p.sex).unwrap_or(0) as f64 * 0.4;
    let race = match cfg.races.iter().position(|r| *r == p.race).unwrap_or(0) {
        0 => 0.25,
        1 => -0.1,
        _ => 0.0,
    };
    BASE_ANNUAL_LOG_HAZARD
        + AGE_SLOPE * (f64::from(p.age) - cfg.age_center)
        + sex
        + race
        + YEAR_TREND * f64::from(p.year - cfg.years.0)
}

/// One-year survival for a profile in a county with log-hazard offset `offset`.
pub fn life_table_esr(cfg: &SynthConfig, p: &Profile, offset: f64) -> f64 {
    (-(demographic_log_hazard(cfg, p) + offset).exp()).exp()
}

fn profiles(cfg: &SynthConfig) -> Vec<Profile> {
    let mut out = Vec::new();
    for age in cfg.ages.0..=cfg.ages.1 {
        for sex in &cfg.sexes {
            for year in cfg.years.0..=cfg.years.1 {
                for race in &cfg.races {
                    out.push(Profile::new(age, sex.clone(), year, race.clone()));
                }
            }
        }
    }
    out
}

/// Population table, life table and hidden county offsets.
pub fn generate_tables(cfg: &SynthConfig) -> Result<SynthTables> {
    cfg.validate()?;
    let mut rng = task_rng(cfg.seed, 1);
    let mut county_offsets = BTreeMap::new();
    let mut county_state = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    let mut race_mix = BTreeMap::new();
    let mut reporting_mix = BTreeMap::new();
    for s in 0..cfg.n_states {
        let state = SynthConfig::state_code(s);
        let state_effect: f64 = StandardNormal.sample(&mut rng);
        let k = rng.random_range(cfg.counties_per_state.0..=cfg.counties_per_state.1);
        for c in 0..k {
            let county = format!("{state}C{:02}", c + 1);
            let dev: f64 = StandardNormal.sample(&mut rng);
            let z = state_effect + cfg.county_spread * dev;
            county_offsets.insert(county.clone(), cfg.geo_effect_scale * z);
            county_state.insert(county.clone(), state.clone());
            // log-uniform size between 1e5 and 1e7
            sizes.insert(county.clone(), 10f64.powf(rng.random_range(5.0..7.0)));
            let mix: Vec<f64> = cfg.races.iter().map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = mix.iter().sum();
            race_mix.insert(county.clone(), mix.into_iter().map(|w| w / total).collect::<Vec<_>>());
            let rep: Vec<f64> = cfg
                .reporting_sources
                .iter()
                .map(|_| rng.random_range(0.1..1.0))
                .collect();
            let total: f64 = rep.iter().sum();
            reporting_mix.insert(county.clone(), rep.into_iter().map(|w| w / total).collect());
        }
    }

    let cells = profiles(cfg);
    let n_cells_per_race = (cells.len() / cfg.races.len()) as f64;
    let mut population = PopulationTable::new();
    let mut esr = ExpectedSurvivalTable::new();
    for (county, state) in &county_state {
        let offset = county_offsets[county];
        for p in &cells {
            let race_idx = cfg.races.iter().position(|r| *r == p.race).unwrap_or(0);
            // older ages thin out
            let age_weight = (-0.02 * (f64::from(p.age) - f64::from(cfg.ages.0))).exp();
            let expected = sizes[county] * race_mix[county][race_idx] * age_weight / n_cells_per_race;
            let jitter = rng.random_range(0.7..1.3);
            let count = (expected * jitter).round().max(1.0) as u64;
            population.insert(p.clone(), county, state, count)?;
            esr.insert(p.clone(), county, state, life_table_esr(cfg, p, offset))?;
        }
    }
    Ok(SynthTables {
        population,
        esr,
        county_offsets,
        county_state,
        reporting_mix,
    })
}

/// Ground truth recorded alongside a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub county_offsets: BTreeMap<String, f64>,
    pub censoring_rate: f64,
    pub realized_censoring_fraction: f64,
    pub n_events: usize,
}

fn linear_predictor(cfg: &SynthConfig, s: &Subject) -> f64 {
    cfg.true_beta
        .iter()
        .map(|(name, beta)| {
            let value = match name.split_once('=') {
                Some((feature, level)) => {
                    f64::from(u8::from(s.categorical_value(feature).as_deref() == Some(level)))
                }
                None if name == "age" => s.numeric_value("age").unwrap_or(0.0) - cfg.age_center,
                None => s.numeric_value(name).unwrap_or(0.0),
            };
            beta * value
        })
        .sum()
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn censored_fraction(event_times: &[f64], cens_draws: &[f64], rate: f64, horizon: f64) -> f64 {
    let censored = event_times
        .iter()
        .zip(cens_draws)
        .filter(|(t, e)| **t > (*e / rate).min(horizon))
        .count();
    censored as f64 / event_times.len().max(1) as f64
}

/// Draws a cohort from `tables`. Residence follows the population table;
/// censoring is exponential with a rate bisected to hit `censoring_target`
/// within 0.02, plus the administrative horizon.
pub fn generate_cohort(cfg: &SynthConfig, tables: &SynthTables) -> Result<(Cohort, SynthTruth)> {
    cfg.validate()?;
    let mut rng = task_rng(cfg.seed, 2);
    let cells: Vec<(&Profile, &str, &str, u64)> = tables.population.iter().collect();
    let mut cumulative = Vec::with_capacity(cells.len());
    let mut total = 0.0;
    for (_, _, _, n) in &cells {
        total += *n as f64;
        cumulative.push(total);
    }
    let grade_weights = {
        let raw: Vec<f64> = (0..cfg.grades.len()).map(|i| 0.4 - 0.05 * i as f64).map(|w| w.max(0.05)).collect();
        let t: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / t).collect::<Vec<_>>()
    };

    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut event_times = Vec::with_capacity(cfg.n_subjects);
    let width = cfg.n_subjects.to_string().len().max(6);
    for i in 0..cfg.n_subjects {
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(cells.len() - 1);
        let (profile, county, state, _) = cells[k];
        let treatment = f64::from(u8::from(rng.random::<bool>()));
        let grade = cfg.grades[pick(&grade_weights, rng.random())].clone();
        let source =
            cfg.reporting_sources[pick(&tables.reporting_mix[county], rng.random())].clone();
        let mut s = Subject {
            id: format!("P{:0width$}", i + 1),
            age: Age::Years(profile.age),
            sex: profile.sex.clone(),
            race: profile.race.clone(),
            diagnosis_year: profile.year,
            state: state.to_string(),
            county: Some(county.to_string()),
            categorical: BTreeMap::from([
                ("grade".to_string(), grade),
                ("reporting_source".to_string(), source),
            ]),
            numeric: BTreeMap::from([("treatment".to_string(), treatment)]),
            time: 0.0,
            event: false,
            censoring: Censoring::Right,
        };
        let mult = (linear_predictor(cfg, &s) + tables.county_offsets[county]).exp();
        let e: f64 = Exp1.sample(&mut rng);
        event_times.push(cfg.baseline.event_time(e, mult));
        s.time = 0.0;
        subjects.push(s);
    }

    let mut crng = task_rng(cfg.seed, 3);
    let cens_draws: Vec<f64> = (0..cfg.n_subjects).map(|_| Exp1.sample(&mut crng)).collect();
    let horizon = cfg.admin_censor_horizon;
    let target = cfg.censoring_target;
    // censored fraction is non-decreasing in the censoring rate
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e3f64).ln());
    let mut rate = hi.exp();
    let mut achieved = censored_fraction(&event_times, &cens_draws, lo.exp(), horizon);
    if achieved <= target {
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            rate = mid.exp();
            achieved = censored_fraction(&event_times, &cens_draws, rate, horizon);
            if achieved < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    if (achieved - target).abs() > 0.02 {
        return Err(Error::Calibration { achieved, target });
    }

    let mut n_events = 0;
    for ((s, &t), &e) in subjects.iter_mut().zip(&event_times).zip(&cens_draws) {
        let c = (e / rate).min(horizon);
        if t <= c {
            s.time = t;
            s.event = true;
            n_events += 1;
        } else {
            s.time = c;
        }
    }
    let cohort = Cohort::new(subjects, format!("synthetic (seed {})", cfg.seed))?;
    let truth = SynthTruth {
        config: cfg.clone(),
        county_offsets: tables.county_offsets.clone(),
        censoring_rate: rate,
        realized_censoring_fraction: 1.0 - n_events as f64 / cfg.n_subjects.max(1) as f64,
        n_events,
    };
    Ok((cohort, truth))
}
