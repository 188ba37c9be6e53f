use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dependent_columns, solve_spd, Scaling};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};

/// Correction for events sharing a time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Efron,
    Breslow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Row-major covariates with rows grouped by descending time.
struct RiskSets<'a> {
    x: &'a [f64],
    p: usize,
    event: &'a [bool],
    /// Row indices, descending time.
    order: Vec<usize>,
    /// `(start, end)` ranges into `order` of equal-time groups.
    groups: Vec<(usize, usize)>,
}

impl<'a> RiskSets<'a> {
    fn new(x: &'a [f64], p: usize, time: &'a [f64], event: &'a [bool]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = time[order[start]];
            let mut end = start + 1;
            while end < order.len() && time[order[end]] == t {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Self {
            x,
            p,
            event,
            order,
            groups,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn evaluate(&self, beta: &[f64], ties: TieRule, penalizer: f64) -> PartialLikelihood {
        let p = self.p;
        let n = self.event.len();
        let eta: Vec<f64> = (0..n)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };

        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = DMatrix::<f64>::zeros(p, p);

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = DMatrix::<f64>::zeros(p, p);

        let mut d1 = vec![0.0; p];
        let mut d2 = DMatrix::<f64>::zeros(p, p);
        let mut a1 = vec![0.0; p];

        for &(start, end) in &self.groups {
            let mut deaths = 0usize;
            let mut d0 = 0.0;
            d1.iter_mut().for_each(|v| *v = 0.0);
            d2.fill(0.0);
            for &i in &self.order[start..end] {
                let w = (eta[i] - shift).exp();
                let xi = self.row(i);
                s0 += w;
                for a in 0..p {
                    s1[a] += w * xi[a];
                    for b in 0..=a {
                        s2[(a, b)] += w * xi[a] * xi[b];
                    }
                }
                if self.event[i] {
                    deaths += 1;
                    value += eta[i];
                    for a in 0..p {
                        grad[a] += xi[a];
                    }
                    d0 += w;
                    for a in 0..p {
                        d1[a] += w * xi[a];
                        for b in 0..=a {
                            d2[(a, b)] += w * xi[a] * xi[b];
                        }
                    }
                }
            }
            if deaths == 0 {
                continue;
            }
            for l in 0..deaths {
                let frac = match ties {
                    TieRule::Breslow => 0.0,
                    TieRule::Efron => l as f64 / deaths as f64,
                };
                let a0 = s0 - frac * d0;
                for a in 0..p {
                    a1[a] = s1[a] - frac * d1[a];
                }
                value -= a0.ln() + shift;
                for a in 0..p {
                    grad[a] -= a1[a] / a0;
                    for b in 0..=a {
                        let a2 = s2[(a, b)] - frac * d2[(a, b)];
                        hess[(a, b)] -= a2 / a0 - a1[a] * a1[b] / (a0 * a0);
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        if penalizer > 0.0 {
            let norm2: f64 = beta.iter().map(|b| b * b).sum();
            value -= 0.5 * penalizer * norm2;
            for a in 0..p {
                grad[a] -= penalizer * beta[a];
                hess[(a, a)] -= penalizer;
            }
        }
        PartialLikelihood {
            value,
            gradient: grad,
            hessian: hess,
        }
    }
}

fn check_fit_input(m: &DesignMatrix) -> Result<()> {
    m.require_right_censored()?;
    if m.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Cox log partial likelihood with gradient and Hessian, minus
/// `penalizer / 2 * |beta|^2`.
pub fn cox_partial_loglik(
    beta: &[f64],
    m: &DesignMatrix,
    ties: TieRule,
    penalizer: f64,
) -> Result<PartialLikelihood> {
    if beta.len() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.ncols(),
            got: beta.len(),
        });
    }
    check_fit_input(m)?;
    let mut x = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        x.extend_from_slice(m.row(i));
    }
    let sets = RiskSets::new(&x, m.ncols(), m.time(), m.event());
    Ok(sets.evaluate(beta, ties, penalizer))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxFitOptions {
    pub penalizer: f64,
    pub ties: TieRule,
    /// Convergence threshold on the change in penalised log-likelihood.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Fit on z-scaled covariates; coefficients are reported on the
    /// original scale either way.
    pub standardize: bool,
}

impl Default for CoxFitOptions {
    fn default() -> Self {
        Self {
            penalizer: 0.0,
            ties: TieRule::Efron,
            tol: 1e-7,
            max_iter: 100,
            max_halvings: 10,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub column_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Covariate vector the stored baseline refers to (column means).
    pub reference: Vec<f64>,
    /// `(time, H_ref(time))` knots at distinct event times.
    pub baseline_knots: Vec<(f64, f64)>,
    pub penalizer: f64,
    pub ties: TieRule,
    pub converged: bool,
    pub iterations: usize,
    pub final_loglik: f64,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    fn relative_predictor(&self, x: &[f64]) -> f64 {
        self.beta
            .iter()
            .zip(x)
            .zip(&self.reference)
            .map(|((b, v), r)| b * (v - r))
            .sum()
    }

    fn reference_cumhaz(&self, t: f64) -> f64 {
        let k = self.baseline_knots.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline_knots[k - 1].1
        }
    }

    /// Baseline cumulative hazard `H0(t)` at covariate vector zero.
    pub fn baseline_cumhaz(&self, t: f64) -> f64 {
        let offset: f64 = self.beta.iter().zip(&self.reference).map(|(b, r)| b * r).sum();
        self.reference_cumhaz(t) * (-offset).exp()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `exp(beta' x)`.
pub fn cox_risk_score(model: &CoxModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.beta.len() {
        return Err(Error::Dimension {
            expected: model.beta.len(),
            got: x.len(),
        });
    }
    Ok(model.linear_predictor(x).exp())
}

/// `S(t | x) = exp(-H0(t) exp(beta' x))`.
pub fn cox_survival(model: &CoxModel, x: &[f64], t: f64) -> f64 {
    let h = model.reference_cumhaz(t) * model.relative_predictor(x).exp();
    (-h).exp()
}

/// Newton–Raphson fit of the (penalised) Cox model from `beta = 0`, halving
/// the step whenever the objective would decrease. The baseline cumulative
/// hazard is the Breslow estimate at the fitted coefficients.
pub fn cox_fit(m: &DesignMatrix, opts: &CoxFitOptions) -> Result<CoxModel> {
    check_fit_input(m)?;
    let p = m.ncols();
    let scaling = Scaling::fit(m, opts.standardize);
    let z = scaling.apply(m);
    let sets = RiskSets::new(&z, p, m.time(), m.event());

    let mut beta = vec![0.0; p];
    let mut current = sets.evaluate(&beta, opts.ties, opts.penalizer);
    let mut converged = p == 0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let neg_h = -current.hessian.clone();
        let g = DVector::from_column_slice(&current.gradient);
        let Some(step) = solve_spd(&neg_h, &g) else {
            let bad = dependent_columns(&neg_h);
            let names = if bad.is_empty() {
                m.columns().to_vec()
            } else {
                bad.into_iter().map(|j| m.columns()[j].clone()).collect()
            };
            return Err(Error::SingularHessian(names));
        };
        let mut scale = 1.0;
        let mut halvings = 0;
        let (candidate, next) = loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let next = sets.evaluate(&candidate, opts.ties, opts.penalizer);
            if next.value >= current.value || halvings >= opts.max_halvings {
                break (candidate, next);
            }
            scale *= 0.5;
            halvings += 1;
        };
        let change = next.value - current.value;
        if !next.value.is_finite() || change < 0.0 {
            // no ascent direction left at working precision
            converged = change.abs() < opts.tol.max(1e-9 * current.value.abs());
            break;
        }
        beta = candidate;
        current = next;
        if change < opts.tol {
            converged = true;
        }
    }
    if !converged {
        log::warn!("Cox fit did not converge after {iterations} iterations");
    }

    let beta_orig: Vec<f64> = beta
        .iter()
        .zip(&scaling.scale)
        .map(|(b, s)| b / s)
        .collect();
    let reference = scaling.mean.clone();
    let baseline_knots = breslow_baseline(m, &beta_orig, &reference);
    Ok(CoxModel {
        column_names: m.columns().to_vec(),
        beta: beta_orig,
        reference,
        baseline_knots,
        penalizer: opts.penalizer,
        ties: opts.ties,
        converged,
        iterations,
        final_loglik: current.value,
    })
}

/// Breslow cumulative hazard at covariate vector `reference`.
fn breslow_baseline(m: &DesignMatrix, beta: &[f64], reference: &[f64]) -> Vec<(f64, f64)> {
    let n = m.nrows();
    let rel: Vec<f64> = (0..n)
        .map(|i| {
            m.row(i)
                .iter()
                .zip(beta)
                .zip(reference)
                .map(|((x, b), r)| b * (x - r))
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m.time()[b].total_cmp(&m.time()[a]).then(a.cmp(&b)));
    // walk descending times accumulating the risk set, then reverse
    let mut increments = Vec::new();
    let mut s0 = 0.0;
    let mut k = 0;
    while k < n {
        let t = m.time()[order[k]];
        let mut deaths = 0usize;
        while k < n && m.time()[order[k]] == t {
            s0 += rel[order[k]].exp();
            deaths += usize::from(m.event()[order[k]]);
            k += 1;
        }
        if deaths > 0 {
            increments.push((t, deaths as f64 / s0));
        }
    }
    increments.reverse();
    let mut cum = 0.0;
    increments
        .into_iter()
        .map(|(t, h)| {
            cum += h;
            (t, cum)
        })
        .collect()
}
