//! One-hot encoding into a numeric design matrix, plus collinearity pruning.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::subject::{CensoringKind, Cohort};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCode {
    pub code: u32,
    /// Indicator column for this level; `None` for the reference level.
    pub column: Option<String>,
}

/// Level codes per categorical feature. Codes follow lexicographic level
/// order, so code 0 is always the dropped reference level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingDictionary {
    pub features: BTreeMap<String, BTreeMap<String, LevelCode>>,
}

pub fn indicator_name(feature: &str, level: &str) -> String {
    format!("{feature}={level}")
}

impl CodingDictionary {
    fn insert_feature(&mut self, feature: &str, levels: &BTreeSet<String>) {
        let entry = levels
            .iter()
            .enumerate()
            .map(|(code, level)| {
                let column = (code > 0).then(|| indicator_name(feature, level));
                (
                    level.clone(),
                    LevelCode {
                        code: code as u32,
                        column,
                    },
                )
            })
            .collect();
        self.features.insert(feature.to_string(), entry);
    }

    pub fn levels(&self, feature: &str) -> Option<BTreeSet<String>> {
        self.features
            .get(feature)
            .map(|m| m.keys().cloned().collect())
    }

    /// The exported `feature -> {level -> code}` map.
    pub fn codes(&self) -> BTreeMap<String, BTreeMap<String, u32>> {
        self.features
            .iter()
            .map(|(f, levels)| {
                (
                    f.clone(),
                    levels.iter().map(|(l, c)| (l.clone(), c.code)).collect(),
                )
            })
            .collect()
    }

    /// Recovers a feature's level from one encoded row. Returns `None` if the
    /// row's indicator block is inconsistent with the dictionary.
    pub fn decode(&self, feature: &str, columns: &[String], row: &[f64]) -> Option<String> {
        let levels = self.features.get(feature)?;
        let mut hit: Option<&String> = None;
        let mut reference: Option<&String> = None;
        for (level, code) in levels {
            match &code.column {
                None => reference = Some(level),
                Some(col) => {
                    let j = columns.iter().position(|c| c == col)?;
                    if row[j] == 1.0 {
                        if hit.is_some() {
                            return None;
                        }
                        hit = Some(level);
                    }
                }
            }
        }
        hit.or(reference).cloned()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingSpec {
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
    /// When set, levels come from this dictionary and unseen levels fail.
    pub frozen: Option<CodingDictionary>,
    /// Skip collinearity pruning (used when columns must match a fitted model).
    pub skip_pruning: bool,
}

/// Row-major numeric covariates with survival outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    columns: Vec<String>,
    values: Vec<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    row_ids: Vec<String>,
    censoring: Vec<CensoringKind>,
    pub dictionary: CodingDictionary,
}

impl DesignMatrix {
    /// Builds a right-censored matrix from row-major values.
    pub fn new(
        columns: Vec<String>,
        values: Vec<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = time.len();
        let row_ids = (0..n).map(|i| i.to_string()).collect();
        Self::with_rows(
            columns,
            values,
            time,
            event,
            row_ids,
            vec![CensoringKind::Right; n],
            CodingDictionary::default(),
        )
    }

    pub fn with_rows(
        columns: Vec<String>,
        values: Vec<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
        row_ids: Vec<String>,
        censoring: Vec<CensoringKind>,
        dictionary: CodingDictionary,
    ) -> Result<Self> {
        let n = time.len();
        for (len, what) in [
            (event.len(), "event"),
            (row_ids.len(), "row ids"),
            (censoring.len(), "censoring"),
        ] {
            if len != n {
                return Err(Error::InvalidArgument(format!(
                    "{what} has length {len}, expected {n}"
                )));
            }
        }
        if values.len() != n * columns.len() {
            return Err(Error::Dimension {
                expected: n * columns.len(),
                got: values.len(),
            });
        }
        if let Some(t) = time.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid time {t}")));
        }
        Ok(Self {
            columns,
            values,
            time,
            event,
            row_ids,
            censoring,
            dictionary,
        })
    }

    pub fn nrows(&self) -> usize {
        self.time.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn censoring(&self) -> &[CensoringKind] {
        &self.censoring
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    /// Fails if any row is left- or interval-censored.
    pub fn require_right_censored(&self) -> Result<()> {
        match self
            .censoring
            .iter()
            .position(|k| *k != CensoringKind::Right)
        {
            Some(row) => Err(Error::UnsupportedCensoring {
                row,
                kind: self.censoring[row].as_str().into(),
            }),
            None => Ok(()),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let p = self.ncols();
        let mut values = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            columns: self.columns.clone(),
            values,
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            censoring: rows.iter().map(|&i| self.censoring[i]).collect(),
            dictionary: self.dictionary.clone(),
        }
    }

    pub fn select_columns(&self, keep: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(self.nrows() * keep.len());
        for i in 0..self.nrows() {
            let row = self.row(i);
            values.extend(keep.iter().map(|&j| row[j]));
        }
        DesignMatrix {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values,
            time: self.time.clone(),
            event: self.event.clone(),
            row_ids: self.row_ids.clone(),
            censoring: self.censoring.clone(),
            dictionary: self.dictionary.clone(),
        }
    }

    pub fn drop_columns_where(&self, mut drop: impl FnMut(&str) -> bool) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.ncols())
            .filter(|&j| !drop(&self.columns[j]))
            .collect();
        self.select_columns(&keep)
    }

    pub fn is_constant_column(&self, j: usize) -> bool {
        let n = self.nrows();
        if n == 0 {
            return true;
        }
        let first = self.get(0, j);
        (1..n).all(|i| self.get(i, j) == first)
    }
}

/// Encodes `cohort` into a design matrix: `k - 1` indicators per categorical
/// feature (lexicographically first level dropped), numeric features passed
/// through, then [`prune_collinear`] unless disabled.
pub fn encode_covariates(cohort: &Cohort, spec: &EncodingSpec) -> Result<DesignMatrix> {
    let subjects = cohort.subjects();
    let mut dictionary = CodingDictionary::default();
    let mut blocks: Vec<(String, Vec<String>)> = Vec::new();

    for feature in &spec.categorical {
        let mut values = Vec::with_capacity(subjects.len());
        for s in subjects {
            let v = s
                .categorical_value(feature)
                .ok_or_else(|| Error::MissingFeature {
                    feature: feature.clone(),
                    subject: s.id.clone(),
                })?;
            values.push(v);
        }
        let levels = match &spec.frozen {
            Some(dict) => {
                let levels = dict.levels(feature).ok_or_else(|| Error::UnseenLevel {
                    feature: feature.clone(),
                    level: values.first().cloned().unwrap_or_default(),
                })?;
                if let Some(v) = values.iter().find(|v| !levels.contains(*v)) {
                    return Err(Error::UnseenLevel {
                        feature: feature.clone(),
                        level: v.clone(),
                    });
                }
                levels
            }
            None => values.iter().cloned().collect(),
        };
        dictionary.insert_feature(feature, &levels);
        blocks.push((feature.clone(), values));
    }

    let mut columns = Vec::new();
    for (feature, _) in &blocks {
        for code in dictionary.features[feature].values() {
            if let Some(c) = &code.column {
                columns.push(c.clone());
            }
        }
    }
    columns.extend(spec.numeric.iter().cloned());

    let p = columns.len();
    let mut values = vec![0.0; subjects.len() * p];
    for (i, s) in subjects.iter().enumerate() {
        let row = &mut values[i * p..(i + 1) * p];
        let mut j = 0;
        for (feature, levels) in &blocks {
            let codes = &dictionary.features[feature];
            let width = codes.len() - 1;
            let code = codes[&levels[i]].code as usize;
            if code > 0 {
                row[j + code - 1] = 1.0;
            }
            j += width;
        }
        for feature in &spec.numeric {
            row[j] = s.numeric_value(feature).ok_or_else(|| Error::MissingFeature {
                feature: feature.clone(),
                subject: s.id.clone(),
            })?;
            j += 1;
        }
    }

    let matrix = DesignMatrix::with_rows(
        columns,
        values,
        subjects.iter().map(|s| s.time).collect(),
        subjects.iter().map(|s| s.event).collect(),
        subjects.iter().map(|s| s.id.clone()).collect(),
        subjects.iter().map(|s| s.censoring.kind()).collect(),
        dictionary,
    )?;
    if spec.skip_pruning {
        Ok(matrix)
    } else {
        Ok(prune_collinear(&matrix).0)
    }
}

fn is_death_predictor(m: &DesignMatrix, j: usize) -> bool {
    let mut ones = 0usize;
    for i in 0..m.nrows() {
        match m.get(i, j) {
            v if v == 0.0 => {}
            v if v == 1.0 => {
                if !m.event()[i] {
                    return false;
                }
                ones += 1;
            }
            _ => return false,
        }
    }
    ones > 0
}

/// Drops constant columns, then later duplicates of identical columns, then
/// binary columns whose every 1 coincides with an observed death.
pub fn prune_collinear(m: &DesignMatrix) -> (DesignMatrix, Vec<String>) {
    let mut dropped = Vec::new();
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..m.ncols() {
        if m.is_constant_column(j) {
            dropped.push(m.columns()[j].clone());
        } else {
            keep.push(j);
        }
    }
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    keep.retain(|&j| {
        let bits: Vec<u64> = (0..m.nrows()).map(|i| m.get(i, j).to_bits()).collect();
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(bits) {
            e.insert(j);
            true
        } else {
            dropped.push(m.columns()[j].clone());
            false
        }
    });
    keep.retain(|&j| {
        if is_death_predictor(m, j) {
            dropped.push(m.columns()[j].clone());
            false
        } else {
            true
        }
    });
    (m.select_columns(&keep), dropped)
}
