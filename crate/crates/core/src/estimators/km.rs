use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product-limit survival estimate, listed at distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events_at: Vec<usize>,
}

impl KaplanMeierCurve {
    /// Survival at `t` (right-continuous step function).
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&e| e <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Kaplan–Meier estimator. Subjects censored at an event time stay in that
/// time's risk set.
pub fn kaplan_meier(time: &[f64], event: &[bool]) -> Result<KaplanMeierCurve> {
    if time.is_empty() {
        return Err(Error::InvalidArgument("Kaplan–Meier needs at least one subject".into()));
    }
    if time.len() != event.len() {
        return Err(Error::Dimension {
            expected: time.len(),
            got: event.len(),
        });
    }
    if let Some(t) = time.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid time {t}")));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));

    let mut curve = KaplanMeierCurve {
        event_times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events_at: Vec::new(),
    };
    let mut s = 1.0;
    let mut remaining = time.len();
    let mut k = 0;
    while k < order.len() {
        let t = time[order[k]];
        let mut end = k;
        let mut deaths = 0;
        while end < order.len() && time[order[end]] == t {
            deaths += usize::from(event[order[end]]);
            end += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / remaining as f64;
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.events_at.push(deaths);
        }
        remaining -= end - k;
        k = end;
    }
    Ok(curve)
}
