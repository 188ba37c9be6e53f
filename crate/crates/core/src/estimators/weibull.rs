//! Weibull proportional hazards by full maximum likelihood.
//!
//! Hazard `h(t | x) = (k / s) (t / s)^(k - 1) exp(beta' x)`, optimised over
//! `(ln k, ln s, beta)` so the shape and scale stay positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{solve_spd, Scaling};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeibullFitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub standardize: bool,
}

impl Default for WeibullFitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            max_halvings: 10,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullPhModel {
    pub column_names: Vec<String>,
    pub beta: Vec<f64>,
    pub shape: f64,
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
}

impl WeibullPhModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    pub fn cumulative_hazard(&self, x: &[f64], t: f64) -> f64 {
        (t / self.scale).powf(self.shape) * self.linear_predictor(x).exp()
    }

    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        (-self.cumulative_hazard(x, t)).exp()
    }
}

struct Objective {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

/// Log-likelihood, gradient and Hessian in `theta = (ln k, ln s, beta)`.
fn evaluate(theta: &[f64], z: &[f64], p: usize, time: &[f64], event: &[bool]) -> Objective {
    let dim = p + 2;
    let (a, b) = (theta[0], theta[1]);
    let beta = &theta[2..];
    let k = a.exp();
    let mut value = 0.0;
    let mut g = DVector::<f64>::zeros(dim);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (i, (&t, &d)) in time.iter().zip(event).enumerate() {
        if t <= 0.0 {
            // censored at zero contributes nothing
            continue;
        }
        let x = &z[i * p..(i + 1) * p];
        let eta: f64 = x.iter().zip(beta).map(|(x, b)| x * b).sum();
        let u = t.ln() - b;
        let r = (k * u + eta).exp();
        let d = f64::from(u8::from(d));
        value += d * (a - b + (k - 1.0) * u + eta) - r;

        let ku = k * u;
        g[0] += d * (1.0 + ku) - r * ku;
        g[1] += k * (r - d);
        h[(0, 0)] += d * ku - r * ku * (ku + 1.0);
        h[(0, 1)] += -d * k + k * r * (ku + 1.0);
        h[(1, 1)] += -k * k * r;
        for j in 0..p {
            g[2 + j] += (d - r) * x[j];
            h[(0, 2 + j)] += -ku * r * x[j];
            h[(1, 2 + j)] += k * r * x[j];
            for l in 0..=j {
                h[(2 + j, 2 + l)] -= r * x[j] * x[l];
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            if r >= 2 && c >= 2 {
                h[(c, r)] = h[(r, c)];
            } else {
                h[(r, c)] = h[(c, r)];
            }
        }
    }
    Objective {
        value,
        gradient: g,
        hessian: h,
    }
}

/// Log-likelihood of a Weibull PH model on `m`.
pub fn weibull_loglik(model: &WeibullPhModel, m: &DesignMatrix) -> f64 {
    let mut theta = vec![model.shape.ln(), model.scale.ln()];
    theta.extend_from_slice(&model.beta);
    let mut x = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        x.extend_from_slice(m.row(i));
    }
    evaluate(&theta, &x, m.ncols(), m.time(), m.event()).value
}

/// Damped Newton direction: adds `mu * I` to `-H` until it factorises.
fn ascent_direction(obj: &Objective) -> Option<DVector<f64>> {
    let neg_h = -obj.hessian.clone();
    if let Some(step) = solve_spd(&neg_h, &obj.gradient) {
        return Some(step);
    }
    let diag_scale = (0..neg_h.nrows())
        .map(|i| neg_h[(i, i)].abs())
        .fold(1e-8, f64::max);
    let mut mu = 1e-6 * diag_scale;
    for _ in 0..40 {
        let damped = &neg_h + DMatrix::<f64>::identity(neg_h.nrows(), neg_h.nrows()) * mu;
        if let Some(step) = solve_spd(&damped, &obj.gradient) {
            return Some(step);
        }
        mu *= 10.0;
    }
    None
}

/// Maximum-likelihood Weibull PH fit with right censoring.
pub fn weibull_ph_fit(m: &DesignMatrix, opts: &WeibullFitOptions) -> Result<WeibullPhModel> {
    m.require_right_censored()?;
    let events = m.n_events();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    if let Some(i) = (0..m.nrows()).find(|&i| m.event()[i] && m.time()[i] <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "event at row {i} has non-positive time"
        )));
    }
    let p = m.ncols();
    let scaling = Scaling::fit(m, opts.standardize);
    let z = scaling.apply(m);

    let total_time: f64 = m.time().iter().sum();
    let mut theta = vec![0.0; p + 2];
    theta[1] = (total_time / events as f64).ln();
    let mut current = evaluate(&theta, &z, p, m.time(), m.event());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let Some(step) = ascent_direction(&current) else {
            break;
        };
        let mut scale = 1.0;
        let mut halvings = 0;
        let (candidate, next) = loop {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            let next = evaluate(&candidate, &z, p, m.time(), m.event());
            if (next.value.is_finite() && next.value >= current.value)
                || halvings >= opts.max_halvings
            {
                break (candidate, next);
            }
            scale *= 0.5;
            halvings += 1;
        };
        let change = next.value - current.value;
        if !next.value.is_finite() || change < 0.0 {
            converged = change.abs() < opts.tol.max(1e-9 * current.value.abs());
            break;
        }
        theta = candidate;
        current = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Weibull fit did not converge after {iterations} iterations");
    }

    let shape = theta[0].exp();
    let beta: Vec<f64> = theta[2..]
        .iter()
        .zip(&scaling.scale)
        .map(|(b, s)| b / s)
        .collect();
    let offset: f64 = beta.iter().zip(&scaling.mean).map(|(b, m)| b * m).sum();
    let scale = (theta[1] + offset / shape).exp();
    let mut model = WeibullPhModel {
        column_names: m.columns().to_vec(),
        beta,
        shape,
        scale,
        converged,
        iterations,
        loglik: 0.0,
    };
    model.loglik = weibull_loglik(&model, m);
    Ok(model)
}
