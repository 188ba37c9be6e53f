//! Encode a cohort and fit Cox and Weibull proportional hazards models.
//!
//! cargo run --example cox_fit

use geosurv::data::{encode_covariates, EncodingSpec};
use geosurv::estimators::{
    cox_fit, cox_survival, weibull_ph_fit, write_coefficients_csv, CoxFitOptions,
    WeibullFitOptions,
};
use geosurv::synth::{generate_cohort, generate_tables, SynthConfig};

fn main() -> geosurv::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 20_000,
        censoring_target: 0.5,
        ..Default::default()
    };
    let tables = generate_tables(&cfg)?;
    let (cohort, _) = generate_cohort(&cfg, &tables)?;
    let m = encode_covariates(
        &cohort,
        &EncodingSpec {
            categorical: vec!["grade".into()],
            numeric: vec!["treatment".into(), "age".into()],
            ..Default::default()
        },
    )?;
    println!("true log-hazard ratios: {:?}", cfg.true_beta);

    let cox = cox_fit(&m, &CoxFitOptions::default())?;
    println!("Cox ({} iterations):", cox.iterations);
    write_coefficients_csv(&cox.column_names, &cox.beta, std::io::stdout())?;
    println!("S(60 | first subject) = {:.3}", cox_survival(&cox, m.row(0), 60.0));

    let wb = weibull_ph_fit(&m, &WeibullFitOptions::default())?;
    println!("Weibull: shape {:.3}, scale {:.1}", wb.shape, wb.scale);
    write_coefficients_csv(&wb.column_names, &wb.beta, std::io::stdout())?;
    Ok(())
}
