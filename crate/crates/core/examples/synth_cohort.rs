//! Generate a synthetic cohort with its population and life tables.
//!
//! cargo run --example synth_cohort

use geosurv::synth::{generate_cohort, generate_tables, SynthConfig};

fn main() -> geosurv::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 10_000,
        ..Default::default()
    };
    let tables = generate_tables(&cfg)?;
    let (cohort, truth) = generate_cohort(&cfg, &tables)?;

    println!(
        "{} subjects, {} events, censored fraction {:.3} (target {})",
        cohort.len(),
        truth.n_events,
        truth.realized_censoring_fraction,
        cfg.censoring_target
    );
    println!("hidden county log-hazard offsets:");
    for (county, offset) in &truth.county_offsets {
        println!("  {county} ({}): {offset:+.3}", tables.county_state[county]);
    }
    for s in cohort.subjects().iter().take(3) {
        println!("{s:?}");
    }
    Ok(())
}
