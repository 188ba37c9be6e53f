//! Kaplan–Meier, Cox proportional hazards, and Weibull proportional hazards.

mod cox;
mod km;
mod weibull;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

pub use cox::{
    cox_fit, cox_partial_loglik, cox_risk_score, cox_survival, CoxFitOptions, CoxModel,
    PartialLikelihood, TieRule,
};
pub use km::{kaplan_meier, KaplanMeierCurve};
pub use weibull::{weibull_loglik, weibull_ph_fit, WeibullFitOptions, WeibullPhModel};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};

/// Column means and scales used for internal z-scaling. Zero-variance
/// columns keep scale 1.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn fit(m: &DesignMatrix, enabled: bool) -> Scaling {
        let (n, p) = (m.nrows(), m.ncols());
        if !enabled || n == 0 {
            return Scaling {
                mean: vec![0.0; p],
                scale: vec![1.0; p],
            };
        }
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (acc, v) in mean.iter_mut().zip(m.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; p];
        for i in 0..n {
            for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaling { mean, scale }
    }

    /// Row-major scaled copy of the covariates.
    pub fn apply(&self, m: &DesignMatrix) -> Vec<f64> {
        let p = m.ncols();
        let mut out = Vec::with_capacity(m.nrows() * p);
        for i in 0..m.nrows() {
            out.extend(
                m.row(i)
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, mu), s)| (v - mu) / s),
            );
        }
        out
    }
}

/// Columns that make a symmetric positive semi-definite matrix singular,
/// found by a column-ordered Cholesky that skips dependent pivots.
pub(crate) fn dependent_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let p = a.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..p {
        let mut row = vec![0.0; kept.len()];
        for (r, &k) in kept.iter().enumerate() {
            let mut s = a[(j, k)];
            for (q, &kk) in kept[..r].iter().enumerate() {
                s -= row[q] * l[(k, kk)];
            }
            row[r] = s / l[(k, k)];
        }
        let pivot = a[(j, j)] - row.iter().map(|v| v * v).sum::<f64>();
        let tol = 1e-10 * a[(j, j)].abs().max(1e-300);
        if pivot <= tol || !pivot.is_finite() {
            bad.push(j);
            continue;
        }
        for (r, &k) in kept.iter().enumerate() {
            l[(j, k)] = row[r];
        }
        l[(j, j)] = pivot.sqrt();
        kept.push(j);
    }
    bad
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Writes `(name, beta, abs_beta)` rows sorted by descending `|beta|`.
pub fn write_coefficients_csv<W: Write>(names: &[String], beta: &[f64], writer: W) -> Result<()> {
    let mut rows: Vec<(&String, f64)> = names.iter().zip(beta.iter().copied()).collect();
    rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(b.0)));
    let p = Path::new("<coefficients>");
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "beta", "abs_beta"])
        .map_err(|e| Error::csv(p, e))?;
    for (name, b) in rows {
        w.write_record([name.as_str(), &b.to_string(), &b.abs().to_string()])
            .map_err(|e| Error::csv(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))
}
