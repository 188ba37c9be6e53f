//! Record cleaning: top-coded ages, incomplete rows, and covariates that
//! only exist from some diagnosis year onwards.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::subject::{Age, Cohort, Subject};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    /// Covariates every kept row must carry. `None` requires every covariate
    /// that survives the era check.
    pub required: Option<Vec<String>>,
    /// Drop any covariate whose first appearance is later than the cohort's
    /// earliest diagnosis year.
    pub detect_era_sparse: bool,
    /// Covariates to drop unconditionally as era-sparse.
    pub era_sparse: Vec<String>,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            required: None,
            detect_era_sparse: true,
            era_sparse: Vec::new(),
        }
    }
}

/// Marker used as `row_id` for column-level removals.
pub const COLUMN_ROW_ID: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub row_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removals: Vec<Removal>,
}

impl CleaningReport {
    pub fn is_empty(&self) -> bool {
        self.removals.is_empty()
    }

    pub fn dropped_rows(&self) -> usize {
        self.removals
            .iter()
            .filter(|r| r.row_id != COLUMN_ROW_ID)
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = Path::new("<cleaning report>");
        w.write_record(["row_id", "reason"]).map_err(|e| Error::csv(p, e))?;
        for r in &self.removals {
            w.write_record([&r.row_id, &r.reason])
                .map_err(|e| Error::csv(p, e))?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    }
}

fn has_covariate(s: &Subject, name: &str) -> bool {
    s.categorical.contains_key(name) || s.numeric.contains_key(name)
}

fn era_sparse_features(subjects: &[Subject]) -> Vec<(String, i32)> {
    let Some(first_year) = subjects.iter().map(|s| s.diagnosis_year).min() else {
        return Vec::new();
    };
    let names: BTreeSet<&String> = subjects
        .iter()
        .flat_map(|s| s.categorical.keys().chain(s.numeric.keys()))
        .collect();
    names
        .into_iter()
        .filter_map(|name| {
            let appears = subjects
                .iter()
                .filter(|s| has_covariate(s, name))
                .map(|s| s.diagnosis_year)
                .min()?;
            (appears > first_year).then(|| (name.clone(), appears))
        })
        .collect()
}

fn clean_pass(
    subjects: Vec<Subject>,
    rules: &CleaningRules,
    report: &mut CleaningReport,
) -> (Vec<Subject>, bool) {
    let mut changed = false;
    let mut drop_cols: Vec<(String, String)> = rules
        .era_sparse
        .iter()
        .filter(|f| subjects.iter().any(|s| has_covariate(s, f)))
        .map(|f| (f.clone(), "listed as era-sparse".to_string()))
        .collect();
    if rules.detect_era_sparse {
        for (name, year) in era_sparse_features(&subjects) {
            if !drop_cols.iter().any(|(n, _)| *n == name) {
                drop_cols.push((name, format!("only populated from diagnosis year {year}")));
            }
        }
    }
    drop_cols.sort();
    let mut subjects = subjects;
    for (name, why) in &drop_cols {
        changed = true;
        report.removals.push(Removal {
            row_id: COLUMN_ROW_ID.into(),
            reason: format!("dropped column `{name}`: {why}"),
        });
        for s in &mut subjects {
            s.categorical.remove(name);
            s.numeric.remove(name);
        }
    }

    let required: Vec<String> = match &rules.required {
        Some(list) => list
            .iter()
            .filter(|f| !drop_cols.iter().any(|(n, _)| n == *f))
            .cloned()
            .collect(),
        None => {
            let all: BTreeSet<String> = subjects
                .iter()
                .flat_map(|s| s.categorical.keys().chain(s.numeric.keys()).cloned())
                .collect();
            all.into_iter().collect()
        }
    };

    let mut kept = Vec::with_capacity(subjects.len());
    for s in subjects {
        let reason = if let Age::TopCoded(raw) = &s.age {
            Some(format!("top-coded age `{raw}`"))
        } else {
            required
                .iter()
                .find(|f| !has_covariate(&s, f))
                .map(|f| format!("missing covariate `{f}`"))
        };
        match reason {
            Some(reason) => {
                changed = true;
                report.removals.push(Removal {
                    row_id: s.id.clone(),
                    reason,
                });
            }
            None => kept.push(s),
        }
    }
    (kept, changed)
}

/// Cleans a cohort. Passes repeat until nothing changes, so the result is a
/// fixed point and `clean_cohort` is idempotent.
pub fn clean_cohort(cohort: &Cohort, rules: &CleaningRules) -> (Cohort, CleaningReport) {
    let mut report = CleaningReport::default();
    let mut subjects = cohort.subjects().to_vec();
    loop {
        let (next, changed) = clean_pass(subjects, rules, &mut report);
        subjects = next;
        if !changed {
            break;
        }
    }
    (
        Cohort::from_parts_unchecked(subjects, cohort.provenance.clone()),
        report,
    )
}
