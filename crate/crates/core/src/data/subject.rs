use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age as recorded in the source file. Registries top-code the oldest band
/// (e.g. `85+`); such records are kept on load and removed by cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Age {
    Years(u32),
    TopCoded(String),
}

impl Age {
    pub fn years(&self) -> Option<u32> {
        match self {
            Age::Years(y) => Some(*y),
            Age::TopCoded(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensoringKind {
    Right,
    Left,
    Interval,
}

impl CensoringKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CensoringKind::Right => "right",
            CensoringKind::Left => "left",
            CensoringKind::Interval => "interval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Censoring {
    Right,
    Left,
    Interval { lo: Option<f64>, hi: Option<f64> },
}

impl Censoring {
    pub fn kind(&self) -> CensoringKind {
        match self {
            Censoring::Right => CensoringKind::Right,
            Censoring::Left => CensoringKind::Left,
            Censoring::Interval { .. } => CensoringKind::Interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub age: Age,
    pub sex: String,
    pub race: String,
    pub diagnosis_year: i32,
    pub state: String,
    pub county: Option<String>,
    /// Missing values are simply absent from the map.
    pub categorical: BTreeMap<String, String>,
    pub numeric: BTreeMap<String, f64>,
    /// Survival months.
    pub time: f64,
    /// `true` when death was observed.
    pub event: bool,
    pub censoring: Censoring,
}

impl Subject {
    pub fn validate(&self) -> Result<()> {
        if !(self.time >= 0.0) || !self.time.is_finite() {
            return Err(Error::InvalidSubject {
                id: self.id.clone(),
                reason: format!("time must be finite and non-negative, got {}", self.time),
            });
        }
        if self.event && self.censoring != Censoring::Right {
            return Err(Error::InvalidSubject {
                id: self.id.clone(),
                reason: "an observed event must carry right censoring".into(),
            });
        }
        Ok(())
    }

    /// Looks up a categorical feature. `sex`, `race`, `state`, `county` and
    /// `diagnosis_year` resolve to the built-in fields.
    pub fn categorical_value(&self, feature: &str) -> Option<String> {
        match feature {
            "sex" => Some(self.sex.clone()),
            "race" => Some(self.race.clone()),
            "state" => Some(self.state.clone()),
            "county" => self.county.clone(),
            "diagnosis_year" => Some(self.diagnosis_year.to_string()),
            _ => self.categorical.get(feature).cloned(),
        }
    }

    /// Looks up a numeric feature. `age` and `diagnosis_year` resolve to the
    /// built-in fields.
    pub fn numeric_value(&self, feature: &str) -> Option<f64> {
        match feature {
            "age" => self.age.years().map(f64::from),
            "diagnosis_year" => Some(f64::from(self.diagnosis_year)),
            _ => self.numeric.get(feature).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cohort {
    subjects: Vec<Subject>,
    pub provenance: String,
}

impl Cohort {
    pub fn new(subjects: Vec<Subject>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(subjects.len());
        for s in &subjects {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            subjects,
            provenance: provenance.into(),
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn into_subjects(self) -> Vec<Subject> {
        self.subjects
    }

    /// Keeps subjects matching `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&Subject) -> bool) -> Cohort {
        Cohort {
            subjects: self.subjects.iter().filter(|s| keep(s)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same subjects, ordered by id. Used wherever results must not depend
    /// on input row order.
    pub fn sorted_by_id(&self) -> Cohort {
        let mut subjects = self.subjects.clone();
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        Cohort {
            subjects,
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(subjects: Vec<Subject>, provenance: String) -> Cohort {
        Cohort {
            subjects,
            provenance,
        }
    }

    /// Names of every categorical covariate present on at least one subject.
    pub fn categorical_features(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .subjects
            .iter()
            .flat_map(|s| s.categorical.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn numeric_features(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .subjects
            .iter()
            .flat_map(|s| s.numeric.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

#[cfg(test)]
pub(crate) fn test_subject(id: &str) -> Subject {
    Subject {
        id: id.into(),
        age: Age::Years(60),
        sex: "F".into(),
        race: "white".into(),
        diagnosis_year: 2010,
        state: "KY".into(),
        county: None,
        categorical: BTreeMap::new(),
        numeric: BTreeMap::new(),
        time: 12.0,
        event: false,
        censoring: Censoring::Right,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_time() {
        let mut s = test_subject("a");
        s.time = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn event_requires_right_censoring() {
        let mut s = test_subject("a");
        s.event = true;
        s.censoring = Censoring::Left;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Cohort::new(vec![test_subject("a"), test_subject("a")], "t").unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn builtin_feature_lookup() {
        let s = test_subject("a");
        assert_eq!(s.categorical_value("state").as_deref(), Some("KY"));
        assert_eq!(s.numeric_value("age"), Some(60.0));
        assert_eq!(s.categorical_value("grade"), None);
    }
}
