//! Expert survival statements turned into synthetic individual-level data.
//!
//! Constraints S(t_j) = p_j split [0, T_max] into segments. Each segment
//! receives its share of `n` individuals, whose event times are drawn
//! uniformly inside the segment; every synthetic record is an observed
//! event. The sample size `n` controls how much certainty the resulting
//! external curve carries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Open01};
use serde::{Deserialize, Serialize};

use crate::dataset::{Record, SurvivalDataset};
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::fit::{fit_mle, rank_models, FittedModel};
use crate::km::{kaplan_meier, StepCurve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElicitedConstraint {
    #[serde(rename = "time_months")]
    pub time: f64,
    #[serde(rename = "survival")]
    pub survival_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationSpec {
    pub constraints: Vec<ElicitedConstraint>,
    #[serde(rename = "t_max_months")]
    pub t_max: f64,
    #[serde(rename = "n")]
    pub n_synthetic: usize,
    #[serde(default)]
    pub seed: u64,
    /// Draw segment counts from a multinomial instead of rounding.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multinomial: bool,
}

impl ElicitationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::Spec("at least one survival constraint is required".into()));
        }
        for c in &self.constraints {
            if !(c.time > 0.0 && c.time.is_finite()) {
                return Err(Error::Spec(format!("constraint time must be positive, got {}", c.time)));
            }
            if !(c.survival_prob > 0.0 && c.survival_prob < 1.0) {
                return Err(Error::Spec(format!(
                    "constraint probability must lie in (0, 1), got {}",
                    c.survival_prob
                )));
            }
        }
        for w in self.constraints.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::Spec("constraint times must be strictly increasing".into()));
            }
            if !(w[1].survival_prob < w[0].survival_prob) {
                return Err(Error::Spec(
                    "constraint probabilities must be strictly decreasing over time".into(),
                ));
            }
        }
        let last = self.constraints[self.constraints.len() - 1].time;
        if !(self.t_max > last && self.t_max.is_finite()) {
            return Err(Error::Spec(format!(
                "T_max ({}) must exceed the last constraint time ({last})",
                self.t_max
            )));
        }
        if self.n_synthetic < 10 {
            return Err(Error::Spec(format!(
                "synthetic sample size must be at least 10, got {}",
                self.n_synthetic
            )));
        }
        Ok(())
    }

    /// Segment boundaries 0, t_1, ..., t_m, T_max.
    pub fn boundaries(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.constraints.iter().map(|c| c.time))
            .chain(std::iter::once(self.t_max))
            .collect()
    }

    /// Probability mass of each segment: S_{j-1} - S_j with S_0 = 1, S_{m+1} = 0.
    pub fn segment_masses(&self) -> Vec<f64> {
        let surv: Vec<f64> = std::iter::once(1.0)
            .chain(self.constraints.iter().map(|c| c.survival_prob))
            .chain(std::iter::once(0.0))
            .collect();
        surv.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub dataset: SurvivalDataset,
    pub segment_counts: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Rounded segment counts; the last segment takes the residual so the
/// total is exactly `n`.
fn rounded_counts(masses: &[f64], n: usize) -> Vec<usize> {
    let m = masses.len();
    let mut counts: Vec<usize> = masses[..m - 1]
        .iter()
        .map(|p| (n as f64 * p).round() as usize)
        .collect();
    let used: usize = counts.iter().sum();
    if used <= n {
        counts.push(n - used);
        return counts;
    }
    // Rounding overshoot: round the cumulative mass instead.
    let mut cum = 0.0;
    let mut prev = 0usize;
    counts.clear();
    for p in &masses[..m - 1] {
        cum += p;
        let c = ((n as f64 * cum).round() as usize).min(n);
        counts.push(c - prev);
        prev = c;
    }
    counts.push(n - prev);
    counts
}

fn multinomial_counts<R: Rng>(masses: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut remaining = n as u64;
    let mut mass_left = 1.0;
    let mut counts = Vec::with_capacity(masses.len());
    for (i, &p) in masses.iter().enumerate() {
        if i + 1 == masses.len() {
            counts.push(remaining as usize);
            break;
        }
        let prob = (p / mass_left).clamp(0.0, 1.0);
        let c = rng.sample(
            Binomial::new(remaining, prob).map_err(|e| Error::Numerical(e.to_string()))?,
        );
        counts.push(c as usize);
        remaining -= c;
        mass_left -= p;
    }
    Ok(counts)
}

/// Builds the synthetic dataset for an elicitation spec.
pub fn synthesize_dataset(spec: &ElicitationSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let masses = spec.segment_masses();
    let counts = if spec.multinomial {
        multinomial_counts(&masses, spec.n_synthetic, &mut rng)?
    } else {
        rounded_counts(&masses, spec.n_synthetic)
    };
    let bounds = spec.boundaries();
    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(spec.n_synthetic);
    for (j, &count) in counts.iter().enumerate() {
        let (lo, hi) = (bounds[j], bounds[j + 1]);
        if count == 0 {
            let msg = format!("segment ({lo}, {hi}) received no synthetic individuals");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        for _ in 0..count {
            let u: f64 = rng.sample(Open01);
            records.push(Record {
                time: lo + u * (hi - lo),
                event: true,
            });
        }
    }
    Ok(SyntheticDataset {
        dataset: SurvivalDataset::new(records, "external")?,
        segment_counts: counts,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalFit {
    /// Lowest-AIC converged fit.
    pub best: FittedModel,
    /// All converged fits in AIC order.
    pub ranked: Vec<FittedModel>,
    /// Kaplan-Meier estimate of the fitted data, for visual validation.
    pub km: StepCurve,
}

/// Fits each family to the external data and keeps the AIC-best.
pub fn fit_external(dataset: &SurvivalDataset, families: &[Family]) -> Result<ExternalFit> {
    let families = if families.is_empty() {
        &Family::PARAMETRIC[..]
    } else {
        families
    };
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for &fam in families {
        match fit_mle(fam, dataset, None) {
            Ok(f) if f.converged => fits.push(f),
            Ok(_) => failures.push(format!("{fam}: did not converge")),
            Err(e) => failures.push(format!("{fam}: {e}")),
        }
    }
    if fits.is_empty() {
        return Err(Error::Numerical(format!(
            "no external model could be fitted ({})",
            failures.join("; ")
        )));
    }
    for f in &failures {
        log::warn!("external fit skipped: {f}");
    }
    let ranked = rank_models(fits);
    Ok(ExternalFit {
        best: ranked[0].clone(),
        ranked,
        km: kaplan_meier(dataset),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(constraints: &[(f64, f64)], t_max: f64, n: usize) -> ElicitationSpec {
        ElicitationSpec {
            constraints: constraints
                .iter()
                .map(|&(time, survival_prob)| ElicitedConstraint { time, survival_prob })
                .collect(),
            t_max,
            n_synthetic: n,
            seed: 1,
            multinomial: false,
        }
    }

    #[test]
    fn twenty_percent_at_ten_years() {
        let s = synthesize_dataset(&spec(&[(120.0, 0.2)], 240.0, 100)).unwrap();
        assert_eq!(s.segment_counts, vec![80, 20]);
        let recs = s.dataset.records();
        assert_eq!(recs.iter().filter(|r| r.time < 120.0).count(), 80);
        assert_eq!(recs.iter().filter(|r| r.time > 120.0 && r.time < 240.0).count(), 20);
        assert!(recs.iter().all(|r| r.event));
    }

    #[test]
    fn case_study_constraint_leaves_at_most_four_long_survivors() {
        let s = synthesize_dataset(&spec(&[(180.0, 0.013)], 240.0, 300)).unwrap();
        let long = s.dataset.records().iter().filter(|r| r.time > 180.0).count();
        assert!(long <= 4);
        assert_eq!(s.segment_counts, vec![296, 4]);
    }

    #[test]
    fn two_constraint_rounding() {
        let s = synthesize_dataset(&spec(&[(60.0, 0.5), (120.0, 0.2)], 240.0, 10)).unwrap();
        assert_eq!(s.segment_counts, vec![5, 3, 2]);
    }

    #[test]
    fn zero_count_segment_warns() {
        let s = synthesize_dataset(&spec(&[(60.0, 0.5), (120.0, 0.48)], 240.0, 10)).unwrap();
        assert_eq!(s.dataset.len(), 10);
        assert!(s.segment_counts.contains(&0));
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn rounding_overshoot_keeps_total() {
        let counts = rounded_counts(&[0.15, 0.15, 0.15, 0.55], 10);
        assert_eq!(counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn invalid_specs() {
        assert!(synthesize_dataset(&spec(&[(60.0, 0.2), (120.0, 0.5)], 240.0, 100)).is_err());
        assert!(synthesize_dataset(&spec(&[(120.0, 0.2), (60.0, 0.1)], 240.0, 100)).is_err());
        assert!(synthesize_dataset(&spec(&[(120.0, 0.2)], 120.0, 100)).is_err());
        assert!(synthesize_dataset(&spec(&[(120.0, 1.2)], 240.0, 100)).is_err());
        assert!(synthesize_dataset(&spec(&[(120.0, 0.2)], 240.0, 5)).is_err());
        assert!(synthesize_dataset(&spec(&[], 240.0, 100)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let sp = spec(&[(120.0, 0.2)], 240.0, 100);
        assert_eq!(synthesize_dataset(&sp).unwrap(), synthesize_dataset(&sp).unwrap());
        let mut other = sp.clone();
        other.seed = 2;
        assert_ne!(synthesize_dataset(&sp).unwrap(), synthesize_dataset(&other).unwrap());
    }

    #[test]
    fn multinomial_mode_totals() {
        let mut sp = spec(&[(60.0, 0.5), (120.0, 0.2)], 240.0, 200);
        sp.multinomial = true;
        let s = synthesize_dataset(&sp).unwrap();
        assert_eq!(s.segment_counts.iter().sum::<usize>(), 200);
        assert_eq!(s.dataset.len(), 200);
    }

    #[test]
    fn json_schema() {
        let json = r#"{"constraints":[{"time_months":120,"survival":0.20}], "t_max_months":240, "n":100, "seed":1}"#;
        let sp: ElicitationSpec = serde_json::from_str(json).unwrap();
        assert_eq!(sp, spec(&[(120.0, 0.2)], 240.0, 100));
        let back: serde_json::Value = serde_json::to_value(&sp).unwrap();
        assert_eq!(back["t_max_months"], 240.0);
        assert!(back.get("multinomial").is_none());
    }

    #[test]
    fn km_matches_constraints() {
        let sp = spec(&[(48.0, 0.6), (120.0, 0.25)], 200.0, 137);
        let s = synthesize_dataset(&sp).unwrap();
        let km = kaplan_meier(&s.dataset);
        let n = sp.n_synthetic as f64;
        for c in &sp.constraints {
            let got = km.survival_at(c.time + 1e-9);
            assert!((got - c.survival_prob).abs() <= 1.0 / n + 2.0 / n.sqrt());
        }
    }

    #[test]
    fn external_fit_recovers_constraint() {
        let s = synthesize_dataset(&spec(&[(120.0, 0.2)], 240.0, 100)).unwrap();
        let ext = fit_external(&s.dataset, &[]).unwrap();
        assert_eq!(ext.ranked.len(), 5);
        let g = fit_external(&s.dataset, &[Family::Gompertz]).unwrap();
        let surv = g.best.distribution().unwrap().survival(120.0);
        // Gompertz MLE on evenly spread segment times gives S(120) = 0.2607.
        assert!((surv - 0.2607).abs() < 0.04, "S(120) = {surv}");
    }
}
