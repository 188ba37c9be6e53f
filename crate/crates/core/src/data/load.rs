//! Cohort CSV input and output.
//!
//! A cohort file is a UTF-8, comma-delimited CSV with a header row. A JSON
//! schema maps subject roles to column names. Files written by
//! [`write_cohort`] use a canonical layout that [`Schema::infer`] recognises,
//! so they can be read back without a schema file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::subject::{Age, Censoring, Cohort, Subject};
use crate::error::{Error, Result, RowError};

/// Column-role mapping for a cohort CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default)]
    pub id: Option<String>,
    pub age: String,
    pub sex: String,
    pub race: String,
    pub diagnosis_year: String,
    pub state: String,
    #[serde(default)]
    pub county: Option<String>,
    pub time: String,
    pub event: String,
    #[serde(default)]
    pub censoring: Option<String>,
    #[serde(default)]
    pub interval_lo: Option<String>,
    #[serde(default)]
    pub interval_hi: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub numeric: Vec<String>,
}

const CANONICAL_ROLES: &[&str] = &[
    "id",
    "age",
    "sex",
    "race",
    "year",
    "state",
    "county",
    "time",
    "event",
    "censoring",
    "interval_lo",
    "interval_hi",
];

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Schema> {
        crate::config::read_json(path)
    }

    /// Canonical role columns with no extra covariates.
    pub fn canonical() -> Schema {
        Schema {
            id: Some("id".into()),
            age: "age".into(),
            sex: "sex".into(),
            race: "race".into(),
            diagnosis_year: "year".into(),
            state: "state".into(),
            county: Some("county".into()),
            time: "time".into(),
            event: "event".into(),
            censoring: Some("censoring".into()),
            interval_lo: Some("interval_lo".into()),
            interval_hi: Some("interval_hi".into()),
            categorical: Vec::new(),
            numeric: Vec::new(),
        }
    }

    /// Infers the schema of a canonical-layout file: fixed role names, and
    /// every other column numeric if all its non-empty cells parse as
    /// numbers, categorical otherwise.
    pub fn infer(headers: &[String], rows: &[Vec<String>]) -> Schema {
        let mut schema = Schema::canonical();
        for (j, h) in headers.iter().enumerate() {
            if CANONICAL_ROLES.contains(&h.as_str()) {
                continue;
            }
            let numeric = rows
                .iter()
                .filter_map(|r| r.get(j))
                .filter(|v| !v.is_empty())
                .all(|v| v.parse::<f64>().is_ok());
            if numeric {
                schema.numeric.push(h.clone());
            } else {
                schema.categorical.push(h.clone());
            }
        }
        schema
    }

    fn required_roles(&self) -> [(&'static str, &str); 7] {
        [
            ("age", &self.age),
            ("sex", &self.sex),
            ("race", &self.race),
            ("diagnosis_year", &self.diagnosis_year),
            ("state", &self.state),
            ("time", &self.time),
            ("event", &self.event),
        ]
    }
}

fn read_table<R: Read>(reader: R, source: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(source, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(source, e))?;
        rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
    }
    Ok((headers, rows))
}

pub fn parse_event(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "dead" => Some(true),
        "0" | "false" | "no" | "alive" => Some(false),
        _ => None,
    }
}

fn parse_age(raw: &str) -> Option<Age> {
    if let Ok(y) = raw.parse::<u32>() {
        return Some(Age::Years(y));
    }
    let digits = raw.strip_suffix('+')?;
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        Some(Age::TopCoded(raw.to_string()))
    } else {
        None
    }
}

/// Reads a cohort from CSV text using `schema`.
///
/// Every row that fails to parse is reported; the call fails with
/// [`Error::Rows`] if there is at least one.
pub fn read_cohort<R: Read>(reader: R, schema: &Schema, provenance: &str) -> Result<Cohort> {
    let (headers, rows) = read_table(reader, Path::new(provenance))?;
    cohort_from_rows(&headers, &rows, schema, provenance)
}

pub fn load_cohort(path: &Path, schema: &Schema) -> Result<Cohort> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cohort(file, schema, &path.display().to_string())
}

/// Loads a canonical-layout cohort file, inferring covariate types.
pub fn load_cohort_inferred(path: &Path) -> Result<Cohort> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (headers, rows) = read_table(file, path)?;
    let schema = Schema::infer(&headers, &rows);
    cohort_from_rows(&headers, &rows, &schema, &path.display().to_string())
}

fn cohort_from_rows(
    headers: &[String],
    rows: &[Vec<String>],
    schema: &Schema,
    provenance: &str,
) -> Result<Cohort> {
    let index: BTreeMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let col = |role: &str, name: &str| -> Result<usize> {
        index.get(name).copied().ok_or_else(|| Error::MissingColumn {
            role: role.to_string(),
            column: name.to_string(),
        })
    };
    for (role, name) in schema.required_roles() {
        col(role, name)?;
    }
    let opt = |name: &Option<String>| name.as_deref().and_then(|n| index.get(n).copied());
    let id_col = opt(&schema.id);
    let county_col = opt(&schema.county);
    let cens_col = opt(&schema.censoring);
    let lo_col = opt(&schema.interval_lo);
    let hi_col = opt(&schema.interval_hi);
    let cat_cols = schema
        .categorical
        .iter()
        .map(|n| Ok((n.clone(), col("categorical", n)?)))
        .collect::<Result<Vec<_>>>()?;
    let num_cols = schema
        .numeric
        .iter()
        .map(|n| Ok((n.clone(), col("numeric", n)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut errors = Vec::new();
    let mut subjects = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let row_no = r + 1;
        let cell = |j: usize| row.get(j).map(String::as_str).unwrap_or("");
        let mut fail = |column: &str, message: String| {
            errors.push(RowError {
                row: row_no,
                column: column.to_string(),
                message,
            });
        };

        let id = id_col.map(|j| cell(j).to_string()).unwrap_or_else(|| row_no.to_string());
        let age_raw = cell(col("age", &schema.age)?);
        let age = parse_age(age_raw);
        if age.is_none() {
            fail(&schema.age, format!("unparseable age `{age_raw}`"));
        }
        let year_raw = cell(col("diagnosis_year", &schema.diagnosis_year)?);
        let year = year_raw.parse::<i32>().ok();
        if year.is_none() {
            fail(&schema.diagnosis_year, format!("unparseable year `{year_raw}`"));
        }
        let time_raw = cell(col("time", &schema.time)?);
        let time = time_raw.parse::<f64>().ok().filter(|t| t.is_finite() && *t >= 0.0);
        if time.is_none() {
            fail(&schema.time, format!("unparseable or negative time `{time_raw}`"));
        }
        let event_raw = cell(col("event", &schema.event)?);
        let event = parse_event(event_raw);
        if event.is_none() {
            fail(&schema.event, format!("unparseable event `{event_raw}`"));
        }
        let censoring = match cens_col.map(cell).unwrap_or("") {
            "" | "right" => Some(Censoring::Right),
            "left" => Some(Censoring::Left),
            "interval" => {
                let bound = |c: Option<usize>| c.map(cell).and_then(|v| v.parse::<f64>().ok());
                Some(Censoring::Interval {
                    lo: bound(lo_col),
                    hi: bound(hi_col),
                })
            }
            other => {
                fail("censoring", format!("unknown censoring kind `{other}`"));
                None
            }
        };
        let mut numeric = BTreeMap::new();
        for (name, j) in &num_cols {
            let v = cell(*j);
            if v.is_empty() {
                continue;
            }
            match v.parse::<f64>() {
                Ok(x) => {
                    numeric.insert(name.clone(), x);
                }
                Err(_) => fail(name, format!("unparseable number `{v}`")),
            }
        }
        let categorical: BTreeMap<String, String> = cat_cols
            .iter()
            .filter(|(_, j)| !cell(*j).is_empty())
            .map(|(name, j)| (name.clone(), cell(*j).to_string()))
            .collect();

        if let (Some(age), Some(year), Some(time), Some(event), Some(censoring)) =
            (age, year, time, event, censoring)
        {
            let subject = Subject {
                id,
                age,
                sex: cell(col("sex", &schema.sex)?).to_string(),
                race: cell(col("race", &schema.race)?).to_string(),
                diagnosis_year: year,
                state: cell(col("state", &schema.state)?).to_string(),
                county: county_col.map(cell).filter(|c| !c.is_empty()).map(String::from),
                categorical,
                numeric,
                time,
                event,
                censoring,
            };
            if let Err(e) = subject.validate() {
                errors.push(RowError {
                    row: row_no,
                    column: schema.event.clone(),
                    message: e.to_string(),
                });
            } else {
                subjects.push(subject);
            }
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Cohort::new(subjects, provenance)
}

/// Writes `cohort` in the canonical layout.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let cats = cohort.categorical_features();
    let nums = cohort.numeric_features();
    let with_censoring = cohort
        .subjects()
        .iter()
        .any(|s| s.censoring != Censoring::Right);
    let mut header: Vec<String> = ["id", "age", "sex", "race", "year", "state", "county"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cats.iter().cloned());
    header.extend(nums.iter().cloned());
    header.push("time".into());
    header.push("event".into());
    if with_censoring {
        header.extend(["censoring", "interval_lo", "interval_hi"].map(String::from));
    }
    let mut w = csv::Writer::from_writer(writer);
    let out = Path::new("<cohort>");
    w.write_record(&header).map_err(|e| Error::csv(out, e))?;
    for s in cohort.subjects() {
        let mut rec = vec![
            s.id.clone(),
            match &s.age {
                Age::Years(y) => y.to_string(),
                Age::TopCoded(raw) => raw.clone(),
            },
            s.sex.clone(),
            s.race.clone(),
            s.diagnosis_year.to_string(),
            s.state.clone(),
            s.county.clone().unwrap_or_default(),
        ];
        rec.extend(cats.iter().map(|c| s.categorical.get(c).cloned().unwrap_or_default()));
        rec.extend(
            nums.iter()
                .map(|n| s.numeric.get(n).map(|v| v.to_string()).unwrap_or_default()),
        );
        rec.push(s.time.to_string());
        rec.push(if s.event { "1" } else { "0" }.into());
        if with_censoring {
            let (kind, lo, hi) = match &s.censoring {
                Censoring::Right => ("right", None, None),
                Censoring::Left => ("left", None, None),
                Censoring::Interval { lo, hi } => ("interval", *lo, *hi),
            };
            rec.push(kind.into());
            rec.push(lo.map(|v| v.to_string()).unwrap_or_default());
            rec.push(hi.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| Error::csv(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

pub fn save_cohort(cohort: &Cohort, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cohort(cohort, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            categorical: vec!["grade".into()],
            numeric: vec!["treatment".into()],
            ..Schema::canonical()
        }
    }

    const CSV: &str = "id,age,sex,race,year,state,grade,treatment,time,event\n\
a,50,F,white,2005,KY,G1,1,10.5,1\n\
b,85+,F,black,2006,KY,G2,0,20,0\n\
c,61,M,white,2010,UT,,1,3,true\n";

    #[test]
    fn reads_three_rows() {
        let cohort = read_cohort(CSV.as_bytes(), &schema(), "mem").unwrap();
        assert_eq!(cohort.len(), 3);
        let s = &cohort.subjects()[0];
        assert_eq!(s.age, Age::Years(50));
        assert_eq!(s.categorical["grade"], "G1");
        assert_eq!(s.numeric["treatment"], 1.0);
        assert!(s.event);
    }

    #[test]
    fn top_coded_age_survives_loading() {
        let cohort = read_cohort(CSV.as_bytes(), &schema(), "mem").unwrap();
        assert_eq!(cohort.subjects()[1].age, Age::TopCoded("85+".into()));
        assert!(!cohort.subjects()[2].categorical.contains_key("grade"));
    }

    #[test]
    fn missing_event_column_names_role() {
        let text = "id,age,sex,race,year,state,time\na,50,F,w,2005,KY,1\n";
        let err = read_cohort(text.as_bytes(), &Schema::canonical(), "mem").unwrap_err();
        match err {
            Error::MissingColumn { role, .. } => assert_eq!(role, "event"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_listed_with_numbers() {
        let text = "id,age,sex,race,year,state,time,event\n\
a,50,F,w,2005,KY,abc,1\n\
b,51,F,w,2005,KY,3,1\n\
c,52,F,w,2005,KY,4,maybe\n";
        let err = read_cohort(text.as_bytes(), &Schema::canonical(), "mem").unwrap_err();
        match err {
            Error::Rows(rows) => {
                let nums: Vec<usize> = rows.iter().map(|r| r.row).collect();
                assert_eq!(nums, vec![1, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let cohort = read_cohort(CSV.as_bytes(), &schema(), "mem").unwrap();
        let mut buf = Vec::new();
        write_cohort(&cohort, &mut buf).unwrap();
        let (headers, rows) = read_table(buf.as_slice(), Path::new("mem")).unwrap();
        let inferred = Schema::infer(&headers, &rows);
        assert_eq!(inferred.categorical, vec!["grade".to_string()]);
        assert_eq!(inferred.numeric, vec!["treatment".to_string()]);
        let back = cohort_from_rows(&headers, &rows, &inferred, "mem").unwrap();
        assert_eq!(back.subjects(), cohort.subjects());
    }
}
