//! Paired t-test and bootstrap interval on C-index differences.
//!
//! cargo run --example paired_ttest

use geosurv::stats::{bootstrap_ci, c_index_diff, paired_t_test, t_sf};

fn main() -> geosurv::Result<()> {
    let with_geo = [0.741, 0.752, 0.738, 0.760, 0.749, 0.745, 0.758, 0.751];
    let without = [0.733, 0.741, 0.735, 0.748, 0.740, 0.744, 0.747, 0.739];
    let diffs: Vec<f64> = with_geo.iter().zip(&without).map(|(a, b)| c_index_diff(*a, *b)).collect();

    let t = paired_t_test(&with_geo, &without)?;
    println!("t = {:.3}, df = {}, two-sided p = {:.2e}", t.t_statistic, t.df, t.p_value);
    let ci = bootstrap_ci(&diffs, 0.95, 5_000, 42)?;
    println!("95% bootstrap CI for the mean difference: [{:.4}, {:.4}]", ci.lo, ci.hi);
    println!("P(|T| > 2.045) with 29 df = {:.4}", t_sf(2.045, 29));
    Ok(())
}
