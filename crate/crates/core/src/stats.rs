//! Paired t-test and percentile bootstrap over C-index differences.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::rng::task_rng;

/// C-index with geographic features minus C-index without.
pub fn c_index_diff(with_geo: f64, without_geo: f64) -> f64 {
    with_geo - without_geo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTestResult {
    pub t_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub n: usize,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Two-sided Student-t tail probability `P(|T| > |t|)` with `df` degrees of
/// freedom, via the regularized incomplete beta function.
pub fn t_sf(t: f64, df: usize) -> f64 {
    assert!(df >= 1, "t distribution needs df >= 1");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let v = df as f64;
    let x = v / (v + t * t);
    beta_reg(0.5 * v, 0.5, x).clamp(0.0, 1.0)
}

/// Paired t-test of `a - b` against zero mean.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTestResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&d);
    let sd_diff = sample_sd(&d);
    if !(sd_diff > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t = mean_diff / (sd_diff / (n as f64).sqrt());
    Ok(PairedTTestResult {
        t_statistic: t,
        p_value: t_sf(t, n - 1),
        df: n - 1,
        mean_diff,
        sd_diff,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub replicates: usize,
}

/// Quantile by linear interpolation between order statistics of a sorted
/// sample (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean of `d`.
///
/// Replicate `r` resamples with its own generator derived from `(seed, r)`,
/// so the replicates can run in parallel without changing the result.
pub fn bootstrap_ci(d: &[f64], level: f64, replicates: usize, seed: u64) -> Result<BootstrapInterval> {
    if d.len() < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 values".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument("zero bootstrap replicates".into()));
    }
    let n = d.len();
    // summing around d[0] keeps a constant sample exact
    let shift = d[0];
    let mut means: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, r as u64);
            let sum: f64 = (0..n).map(|_| d[rng.random_range(0..n)] - shift).sum();
            shift + sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapInterval {
        lo: quantile_sorted(&means, alpha),
        hi: quantile_sorted(&means, 1.0 - alpha),
        level,
        replicates,
    })
}
