//! Full with/without-geography experiment on a synthetic cohort: Overall
//! plus one run per state, written as report CSVs.
//!
//! cargo run --release --example experiment [out_dir]

use std::path::PathBuf;

use geosurv::experiment::{emit_per_subset, emit_report, run_statewise, ExperimentConfig};
use geosurv::geo::attach_state_esr;
use geosurv::synth::{generate_cohort, generate_tables, SynthConfig};

fn main() -> geosurv::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("geosurv-experiment"));
    std::fs::create_dir_all(&out).map_err(|e| geosurv::Error::InvalidArgument(e.to_string()))?;

    let synth = SynthConfig {
        n_subjects: 50_000,
        ..Default::default()
    };
    let tables = generate_tables(&synth)?;
    let (cohort, _) = generate_cohort(&synth, &tables)?;
    let (cohort, _) = attach_state_esr(&cohort, &tables.esr, &tables.population, Default::default())?;

    let outcome = run_statewise(&cohort, &ExperimentConfig::default())?;
    println!(
        "{:<8} {:>6} {:>8} {:>10} {:>20} {:>9}",
        "dataset", "rows", "t", "p", "95% CI", "avg diff"
    );
    for r in &outcome.reports {
        println!(
            "{:<8} {:>6} {:>8.3} {:>10.2e} [{:>8.4}, {:>8.4}] {:>9.4}",
            r.dataset_name, r.rows_per_subset, r.t, r.p, r.ci.lo, r.ci.hi, r.avg_improvement
        );
    }
    for s in &outcome.skipped {
        println!("skipped {} ({} rows): {}", s.dataset_name, s.rows, s.reason);
    }
    emit_report(&outcome.reports, &out.join("report.csv"))?;
    emit_per_subset(&outcome.reports, &out.join("per_subset.csv"))?;
    println!("wrote {}", out.display());
    Ok(())
}
