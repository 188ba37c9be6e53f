//! Aggregate county life-table survival to a state value and attach it to
//! a cohort.
//!
//! cargo run --example state_esr

use geosurv::data::{Age, Censoring, Cohort, Subject};
use geosurv::geo::{
    attach_state_esr, county_weights, state_esr, AttachPolicy, ExpectedSurvivalTable,
    MissingCellPolicy, PopulationTable, Profile,
};

fn main() -> geosurv::Result<()> {
    let p = Profile::new(65, "F", 2012, "white");
    let mut pop = PopulationTable::new();
    let mut esr = ExpectedSurvivalTable::new();
    for (county, count, value) in [("K1", 600, 0.97), ("K2", 300, 0.95), ("K3", 100, 0.90)] {
        pop.insert(p.clone(), county, "KY", count)?;
        esr.insert(p.clone(), county, "KY", value)?;
    }

    println!("weights: {:?}", county_weights(&pop, &p, "KY")?);
    let r = state_esr(&esr, &pop, &p, "KY", MissingCellPolicy::Renormalize)?;
    // 0.6 * 0.97 + 0.3 * 0.95 + 0.1 * 0.90
    println!("StateESR = {:.4} from {} counties", r.value, r.counties_used);

    let subject = Subject {
        id: "p1".into(),
        age: Age::Years(65),
        sex: "F".into(),
        race: "white".into(),
        diagnosis_year: 2012,
        state: "KY".into(),
        county: None,
        categorical: Default::default(),
        numeric: Default::default(),
        time: 20.0,
        event: false,
        censoring: Censoring::Right,
    };
    let cohort = Cohort::new(vec![subject], "example")?;
    let (attached, report) = attach_state_esr(&cohort, &esr, &pop, AttachPolicy::default())?;
    println!(
        "attached: {:?}, report: {:?}",
        attached.subjects()[0].numeric,
        report.entries[0]
    );
    Ok(())
}
