//! Load a registry extract with a column mapping, clean it, and build a
//! design matrix.
//!
//! cargo run --example data_pipeline

use std::path::Path;

use geosurv::config::parse_json;
use geosurv::data::{clean_cohort, encode_covariates, read_cohort, CleaningRules, EncodingSpec, Schema};

const EXTRACT: &str = "\
patient,age_dx,gender,race_grp,dx_year,st,stage,nodes,months,vital
a1,61,F,white,2004,KY,I,0,30,dead
a2,55,M,black,2004,KY,II,2,14,alive
a3,85+,F,white,2005,TN,I,1,40,alive
a4,70,M,other,2006,TN,III,,5,dead
a5,66,F,white,2006,TN,II,4,22,alive
";

fn main() -> geosurv::Result<()> {
    let schema: Schema = parse_json(
        r#"{"id": "patient", "age": "age_dx", "sex": "gender", "race": "race_grp",
            "diagnosis_year": "dx_year", "state": "st", "time": "months", "event": "vital",
            "categorical": ["stage"], "numeric": ["nodes"]}"#,
        Path::new("schema.json"),
    )?;
    let cohort = read_cohort(EXTRACT.as_bytes(), &schema, "extract")?;
    let (clean, report) = clean_cohort(&cohort, &CleaningRules::default());
    for r in &report.removals {
        println!("dropped {}: {}", r.row_id, r.reason);
    }
    let m = encode_covariates(
        &clean,
        &EncodingSpec {
            categorical: vec!["stage".into(), "sex".into()],
            numeric: vec!["nodes".into(), "age".into()],
            ..Default::default()
        },
    )?;
    println!("columns: {:?}", m.columns());
    for i in 0..m.nrows() {
        println!("{:>4} {:?} t={} event={}", m.row_ids()[i], m.row(i), m.time()[i], m.event()[i]);
    }
    println!("coding: {:?}", m.dictionary.codes());
    Ok(())
}
