//! State-level expected survival rate (StateESR).
//!
//! Life tables give a one-year expected survival rate per county and
//! demographic profile. Registries only disclose the state of residence, so
//! the county value is marginalised out using general-population residence
//! shares as weights:
//!
//! ```text
//! StateESR(p, s) = sum_i ESR(p, c_i) * Pr(c_i | p, s),   Pr(c_i | p, s) = N(p, c_i) / sum_j N(p, c_j)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, Subject};
use crate::error::{Error, Result};

/// Name of the covariate added by [`attach_state_esr`].
pub const STATE_ESR: &str = "state_esr";

/// Demographic cell key shared by population and life tables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Profile {
    pub age: u32,
    pub sex: String,
    pub year: i32,
    pub race: String,
}

impl Profile {
    pub fn new(age: u32, sex: impl Into<String>, year: i32, race: impl Into<String>) -> Self {
        Self {
            age,
            sex: sex.into(),
            year,
            race: race.into(),
        }
    }

    pub fn of(subject: &Subject) -> Option<Profile> {
        Some(Profile {
            age: subject.age.years()?,
            sex: subject.sex.clone(),
            year: subject.diagnosis_year,
            race: subject.race.clone(),
        })
    }
}

fn record_county(
    county_state: &mut BTreeMap<String, String>,
    county: &str,
    state: &str,
) -> Result<()> {
    match county_state.get(county) {
        Some(existing) if existing != state => Err(Error::CountyStateConflict {
            county: county.to_string(),
            first: existing.clone(),
            second: state.to_string(),
        }),
        Some(_) => Ok(()),
        None => {
            county_state.insert(county.to_string(), state.to_string());
            Ok(())
        }
    }
}

/// General-population counts per profile and county.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTable {
    cells: BTreeMap<(Profile, String), BTreeMap<String, u64>>,
    county_state: BTreeMap<String, String>,
}

impl PopulationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, profile: Profile, county: &str, state: &str, count: u64) -> Result<()> {
        record_county(&mut self.county_state, county, state)?;
        let counties = self.cells.entry((profile.clone(), state.to_string())).or_default();
        if counties.insert(county.to_string(), count).is_some() {
            return Err(Error::DuplicateCell(format!("{profile:?} county {county}")));
        }
        Ok(())
    }

    /// Counts for `profile` across the counties of `state`, ordered by county.
    pub fn counts(&self, profile: &Profile, state: &str) -> Option<&BTreeMap<String, u64>> {
        self.cells.get(&(profile.clone(), state.to_string()))
    }

    pub fn states(&self) -> BTreeSet<String> {
        self.county_state.values().cloned().collect()
    }

    pub fn state_of(&self, county: &str) -> Option<&str> {
        self.county_state.get(county).map(String::as_str)
    }

    /// Total population per county, summed over profiles.
    pub fn county_totals(&self) -> BTreeMap<String, u64> {
        let mut totals = BTreeMap::new();
        for counties in self.cells.values() {
            for (c, n) in counties {
                *totals.entry(c.clone()).or_insert(0) += n;
            }
        }
        totals
    }

    /// Iterates `(profile, county, state, count)`.
    pub fn iter(&self) -> impl Iterator<Item = (&Profile, &str, &str, u64)> {
        self.cells.iter().flat_map(|((p, s), counties)| {
            counties
                .iter()
                .map(move |(c, n)| (p, c.as_str(), s.as_str(), *n))
        })
    }

    pub fn read_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut table = Self::new();
        read_cells(reader, source, "count", |profile, county, state, raw, line| {
            let count = raw.parse::<u64>().map_err(|_| Error::Csv {
                path: source.to_path_buf(),
                message: format!("line {line}: invalid count `{raw}`"),
            })?;
            table.insert(profile, county, state, count)
        })?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_cells(writer, "count", self.iter().map(|(p, c, s, n)| (p, c, s, n.to_string())))
    }
}

/// One-year expected survival rates per profile and county.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpectedSurvivalTable {
    // (sex, year, race, county) -> age -> esr
    cells: BTreeMap<(String, i32, String, String), BTreeMap<u32, f64>>,
    county_state: BTreeMap<String, String>,
}

impl ExpectedSurvivalTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, profile: Profile, county: &str, state: &str, esr: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&esr) {
            return Err(Error::InvalidArgument(format!(
                "ESR {esr} outside [0, 1] for {profile:?} county {county}"
            )));
        }
        record_county(&mut self.county_state, county, state)?;
        let ages = self
            .cells
            .entry((profile.sex.clone(), profile.year, profile.race.clone(), county.to_string()))
            .or_default();
        if ages.insert(profile.age, esr).is_some() {
            return Err(Error::DuplicateCell(format!("{profile:?} county {county}")));
        }
        Ok(())
    }

    pub fn get(&self, profile: &Profile, county: &str) -> Option<f64> {
        self.ages(profile, county)?.get(&profile.age).copied()
    }

    fn ages(&self, profile: &Profile, county: &str) -> Option<&BTreeMap<u32, f64>> {
        self.cells.get(&(
            profile.sex.clone(),
            profile.year,
            profile.race.clone(),
            county.to_string(),
        ))
    }

    /// The cell for the nearest available age in the same county; ties go to
    /// the younger age.
    pub fn nearest_age(&self, profile: &Profile, county: &str) -> Option<(u32, f64)> {
        let ages = self.ages(profile, county)?;
        let below = ages.range(..=profile.age).next_back();
        let above = ages.range(profile.age..).next();
        match (below, above) {
            (Some((&a, &v)), Some((&b, &w))) => {
                if profile.age - a <= b - profile.age {
                    Some((a, v))
                } else {
                    Some((b, w))
                }
            }
            (Some((&a, &v)), None) | (None, Some((&a, &v))) => Some((a, v)),
            (None, None) => None,
        }
    }

    pub fn state_of(&self, county: &str) -> Option<&str> {
        self.county_state.get(county).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Profile, &str, &str, f64)> + '_ {
        self.cells.iter().flat_map(move |((sex, year, race, county), ages)| {
            let state = self.county_state[county].as_str();
            ages.iter().map(move |(age, esr)| {
                (
                    Profile::new(*age, sex.clone(), *year, race.clone()),
                    county.as_str(),
                    state,
                    *esr,
                )
            })
        })
    }

    pub fn read_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut table = Self::new();
        read_cells(reader, source, "esr", |profile, county, state, raw, line| {
            let esr = raw.parse::<f64>().map_err(|_| Error::Csv {
                path: source.to_path_buf(),
                message: format!("line {line}: invalid esr `{raw}`"),
            })?;
            table.insert(profile, county, state, esr).map_err(|e| Error::Csv {
                path: source.to_path_buf(),
                message: format!("line {line}: {e}"),
            })
        })?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<_> = self.iter().collect();
        write_cells(writer, "esr", rows.iter().map(|(p, c, s, v)| (p, *c, *s, v.to_string())))
    }
}

const CELL_COLUMNS: [&str; 6] = ["age", "sex", "year", "race", "county", "state"];

fn read_cells<R: Read>(
    reader: R,
    source: &Path,
    value_column: &str,
    mut sink: impl FnMut(Profile, &str, &str, &str, u64) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    let mut idx = [0usize; 7];
    for (k, name) in CELL_COLUMNS.iter().chain(std::iter::once(&value_column)).enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::Csv {
                path: source.to_path_buf(),
                message: format!("line 1: missing column `{name}`"),
            })?;
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(source, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let f = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let bad = |what: &str, raw: &str| Error::Csv {
            path: source.to_path_buf(),
            message: format!("line {line}: invalid {what} `{raw}`"),
        };
        let age = f(0).parse::<u32>().map_err(|_| bad("age", f(0)))?;
        let year = f(2).parse::<i32>().map_err(|_| bad("year", f(2)))?;
        let profile = Profile::new(age, f(1), year, f(3));
        sink(profile, f(4), f(5), f(6), line).map_err(|e| match e {
            Error::Csv { .. } => e,
            other => Error::Csv {
                path: source.to_path_buf(),
                message: format!("line {line}: {other}"),
            },
        })?;
    }
    Ok(())
}

fn write_cells<'a, W: Write>(
    writer: W,
    value_column: &str,
    rows: impl Iterator<Item = (&'a Profile, &'a str, &'a str, String)>,
) -> Result<()> {
    let p = Path::new("<table>");
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CELL_COLUMNS.to_vec();
    header.push(value_column);
    w.write_record(&header).map_err(|e| Error::csv(p, e))?;
    for (profile, county, state, value) in rows {
        w.write_record([
            profile.age.to_string().as_str(),
            &profile.sex,
            profile.year.to_string().as_str(),
            &profile.race,
            county,
            state,
            &value,
        ])
        .map_err(|e| Error::csv(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))
}

/// Residence probability of each county of `state` for `profile`.
pub fn county_weights(
    pop: &PopulationTable,
    profile: &Profile,
    state: &str,
) -> Result<BTreeMap<String, f64>> {
    let no_data = || Error::NoPopulationData {
        profile: profile.clone(),
        state: state.to_string(),
    };
    let counts = pop.counts(profile, state).ok_or_else(no_data)?;
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(no_data());
    }
    let total = total as f64;
    Ok(counts
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(c, n)| (c.clone(), *n as f64 / total))
        .collect())
}

/// What to do with a populated county that has no ESR cell for the profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingCellPolicy {
    /// Drop the county and renormalise the remaining weights.
    #[default]
    Renormalize,
    /// Use the nearest-age cell of the same county, renormalising only if
    /// the county has no cells at all.
    NearestAge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEsrResult {
    pub value: f64,
    pub counties_used: usize,
    /// Residence weight carried by the contributing counties (1 when none
    /// were missing).
    pub total_weight: f64,
    pub fallback_applied: bool,
}

/// Population-weighted state-level ESR for one profile.
pub fn state_esr(
    esr: &ExpectedSurvivalTable,
    pop: &PopulationTable,
    profile: &Profile,
    state: &str,
    policy: MissingCellPolicy,
) -> Result<StateEsrResult> {
    let weights = county_weights(pop, profile, state)?;
    let mut value = 0.0;
    let mut used = 0usize;
    let mut total_weight = 0.0;
    let mut fallback = false;
    for (county, w) in &weights {
        let cell = match esr.get(profile, county) {
            Some(v) => Some(v),
            None => {
                fallback = true;
                match policy {
                    MissingCellPolicy::Renormalize => None,
                    MissingCellPolicy::NearestAge => esr.nearest_age(profile, county).map(|(_, v)| v),
                }
            }
        };
        if let Some(v) = cell {
            value += v * w;
            total_weight += w;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::AllEsrCellsMissing {
            profile: profile.clone(),
            state: state.to_string(),
        });
    }
    let all_present = used == weights.len();
    if !all_present {
        value /= total_weight;
    }
    Ok(StateEsrResult {
        value: value.clamp(0.0, 1.0),
        counties_used: used,
        total_weight: if all_present { 1.0 } else { total_weight },
        fallback_applied: fallback,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnFailure {
    #[default]
    DropRow,
    Abort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachPolicy {
    #[serde(default)]
    pub missing_cell: MissingCellPolicy,
    #[serde(default)]
    pub on_failure: OnFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachStatus {
    Ok,
    Fallback,
    Dropped,
    Failed,
}

impl AttachStatus {
    fn as_str(self) -> &'static str {
        match self {
            AttachStatus::Ok => "ok",
            AttachStatus::Fallback => "fallback",
            AttachStatus::Dropped => "dropped",
            AttachStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachEntry {
    pub subject_id: String,
    pub status: AttachStatus,
    pub detail: String,
}

/// One entry per input subject, in cohort order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttachReport {
    pub entries: Vec<AttachEntry>,
}

impl AttachReport {
    pub fn failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, AttachStatus::Dropped | AttachStatus::Failed))
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = Path::new("<attach report>");
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["subject_id", "status", "detail"])
            .map_err(|e| Error::csv(p, e))?;
        for e in &self.entries {
            w.write_record([e.subject_id.as_str(), e.status.as_str(), e.detail.as_str()])
                .map_err(|e| Error::csv(p, e))?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    }
}

/// Fails with [`Error::UnknownStates`] listing cohort states absent from the
/// population table.
pub fn check_states(cohort: &Cohort, pop: &PopulationTable) -> Result<()> {
    let known = pop.states();
    let missing: BTreeSet<String> = cohort
        .subjects()
        .iter()
        .filter(|s| !known.contains(&s.state))
        .map(|s| s.state.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownStates(missing.into_iter().collect()))
    }
}

type Outcome = std::result::Result<StateEsrResult, String>;

fn state_outcomes(
    subjects: &[&Subject],
    esr: &ExpectedSurvivalTable,
    pop: &PopulationTable,
    policy: MissingCellPolicy,
) -> Vec<Outcome> {
    // per-state memo; each state task owns its own cache
    let mut memo: HashMap<Profile, Outcome> = HashMap::new();
    subjects
        .iter()
        .map(|s| {
            let Some(profile) = Profile::of(s) else {
                return Err("top-coded age has no profile".to_string());
            };
            memo.entry(profile)
                .or_insert_with_key(|p| {
                    state_esr(esr, pop, p, &s.state, policy).map_err(|e| e.to_string())
                })
                .clone()
        })
        .collect()
}

/// Adds the `state_esr` numeric covariate to every subject.
///
/// Subjects are grouped by state and the states are processed in parallel;
/// output order and values are identical to a sequential pass.
pub fn attach_state_esr(
    cohort: &Cohort,
    esr: &ExpectedSurvivalTable,
    pop: &PopulationTable,
    policy: AttachPolicy,
) -> Result<(Cohort, AttachReport)> {
    let mut by_state: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in cohort.subjects().iter().enumerate() {
        by_state.entry(s.state.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_state.into_iter().collect();
    let results: Vec<Vec<Outcome>> = groups
        .par_iter()
        .map(|(_, idx)| {
            let subjects: Vec<&Subject> = idx.iter().map(|&i| &cohort.subjects()[i]).collect();
            state_outcomes(&subjects, esr, pop, policy.missing_cell)
        })
        .collect();

    let mut outcomes: Vec<Option<Outcome>> = vec![None; cohort.len()];
    for ((_, idx), res) in groups.iter().zip(results) {
        for (&i, r) in idx.iter().zip(res) {
            outcomes[i] = Some(r);
        }
    }

    let mut report = AttachReport::default();
    let mut subjects = Vec::with_capacity(cohort.len());
    for (s, outcome) in cohort.subjects().iter().zip(outcomes) {
        match outcome.expect("every subject belongs to a state group") {
            Ok(r) => {
                let mut s = s.clone();
                s.numeric.insert(STATE_ESR.to_string(), r.value);
                report.entries.push(AttachEntry {
                    subject_id: s.id.clone(),
                    status: if r.fallback_applied {
                        AttachStatus::Fallback
                    } else {
                        AttachStatus::Ok
                    },
                    detail: format!("counties_used={}", r.counties_used),
                });
                subjects.push(s);
            }
            Err(detail) => report.entries.push(AttachEntry {
                subject_id: s.id.clone(),
                status: match policy.on_failure {
                    OnFailure::DropRow => AttachStatus::Dropped,
                    OnFailure::Abort => AttachStatus::Failed,
                },
                detail,
            }),
        }
    }
    let failures = report.failures();
    if failures > 0 && policy.on_failure == OnFailure::Abort {
        return Err(Error::AttachAborted { failures, report });
    }
    Ok((
        Cohort::from_parts_unchecked(subjects, cohort.provenance.clone()),
        report,
    ))
}
