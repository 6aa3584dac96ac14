//! Kaplan-Meier product-limit estimation.

use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;

const Z95: f64 = 1.959_963_984_540_054;

/// Kaplan-Meier estimate evaluated at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Greenwood standard error of S at each step.
    pub std_err: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub n_risk: Vec<usize>,
    pub n_event: Vec<usize>,
    /// Largest observed time, event or censoring.
    pub last_time: f64,
}

/// Result of a step-function lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmLookup {
    pub survival: f64,
    /// Set when `t` lies after the last observed time.
    pub beyond_data: bool,
}

/// Product-limit estimator with Greenwood variance and log(-log) bands.
///
/// Events at a tied time are counted before censorings at that time, so a
/// censored record at t is still in the risk set for events at t.
pub fn kaplan_meier(data: &SurvivalDataset) -> StepCurve {
    let mut recs: Vec<(f64, bool)> = data.records().iter().map(|r| (r.time, r.event)).collect();
    recs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = StepCurve {
        times: Vec::new(),
        survival: Vec::new(),
        std_err: Vec::new(),
        lower95: Vec::new(),
        upper95: Vec::new(),
        n_risk: Vec::new(),
        n_event: Vec::new(),
        last_time: data.max_time(),
    };

    let mut at_risk = recs.len();
    let mut surv = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < recs.len() {
        let t = recs[i].0;
        let mut deaths = 0;
        let mut leaving = 0;
        while i < recs.len() && recs[i].0 == t {
            deaths += recs[i].1 as usize;
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            if deaths < at_risk {
                greenwood += deaths as f64 / (at_risk as f64 * (at_risk - deaths) as f64);
            }
            let se = surv * greenwood.sqrt();
            let (lo, hi) = loglog_band(surv, greenwood);
            curve.times.push(t);
            curve.survival.push(surv);
            curve.std_err.push(se);
            curve.lower95.push(lo);
            curve.upper95.push(hi);
            curve.n_risk.push(at_risk);
            curve.n_event.push(deaths);
        }
        at_risk -= leaving;
    }
    curve
}

fn loglog_band(surv: f64, greenwood: f64) -> (f64, f64) {
    if surv <= 0.0 || surv >= 1.0 || greenwood == 0.0 {
        return (surv, surv);
    }
    let ln_s = surv.ln();
    let se = greenwood.sqrt() / ln_s.abs();
    (surv.powf((Z95 * se).exp()), surv.powf((-Z95 * se).exp()))
}

/// Right-continuous lookup of the step curve at `t`.
pub fn km_survival_at(curve: &StepCurve, t: f64) -> KmLookup {
    let k = curve.times.partition_point(|&x| x <= t);
    let survival = if k == 0 { 1.0 } else { curve.survival[k - 1] };
    KmLookup {
        survival,
        beyond_data: t > curve.last_time,
    }
}

impl StepCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        km_survival_at(self, t).survival
    }
}
