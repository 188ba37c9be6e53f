#![allow(dead_code)]

use std::collections::BTreeMap;

use geosurv::data::{Age, Censoring, Cohort, Subject};
use geosurv::synth::SynthConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn subject(id: &str, age: u32, state: &str, county: &str, time: f64, event: bool) -> Subject {
    Subject {
        id: id.to_string(),
        age: Age::Years(age),
        sex: "F".into(),
        race: "white".into(),
        diagnosis_year: 2010,
        state: state.into(),
        county: Some(county.into()),
        categorical: BTreeMap::new(),
        numeric: BTreeMap::new(),
        time,
        event,
        censoring: Censoring::Right,
    }
}

/// Brute-force Harrell C: every ordered pair, comparable when the first
/// failed strictly earlier; ties in risk score one half.
pub fn brute_force_c(time: &[f64], event: &[bool], risk: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..time.len() {
        for j in 0..time.len() {
            if event[i] && time[i] < time[j] {
                den += 1.0;
                if risk[i] > risk[j] {
                    num += 1.0;
                } else if risk[i] == risk[j] {
                    num += 0.5;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Random right-censored data with coarse times and risks so ties occur.
pub fn random_survival(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let time = (0..n).map(|_| f64::from(rng.random_range(1..12u32))).collect();
    let event = (0..n).map(|_| rng.random_bool(0.6)).collect();
    let risk = (0..n).map(|_| f64::from(rng.random_range(0..8u32)) * 0.25).collect();
    (time, event, risk)
}

/// Small, fast synthetic configuration.
pub fn small_synth(n: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_subjects: n,
        n_states: 3,
        counties_per_state: (2, 4),
        ages: (45, 75),
        years: (2008, 2012),
        seed,
        ..Default::default()
    }
}

pub fn cohort(subjects: Vec<Subject>) -> Cohort {
    Cohort::new(subjects, "test").unwrap()
}

/// Generated cohort with `state_esr` attached.
pub fn synth_cohort(cfg: &SynthConfig) -> Cohort {
    let tables = geosurv::synth::generate_tables(cfg).unwrap();
    let (cohort, _) = geosurv::synth::generate_cohort(cfg, &tables).unwrap();
    let (cohort, _) = geosurv::geo::attach_state_esr(
        &cohort,
        &tables.esr,
        &tables.population,
        Default::default(),
    )
    .unwrap();
    cohort
}
