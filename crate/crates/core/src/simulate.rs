//! Simulated trial data with staggered entry and administrative
//! censoring at one or more data cuts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Record, SurvivalDataset};
use crate::distributions::Distribution;
use crate::error::{Error, Result};

/// Gompertz curve with S(48) = 0.7 and S(180) = 0.013, used as the
/// truth for the bundled simulated trial.
pub fn reference_truth() -> Distribution {
    Distribution::Gompertz {
        shape: 0.014_210_343_581_327_358,
        rate: 0.005_182_380_716_041_502,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDesign {
    pub n: usize,
    /// Patients enter uniformly over [0, accrual] months.
    pub accrual: f64,
    pub seed: u64,
}

/// One dataset per data cut (months since the first patient entered).
/// All cuts share the same latent event times, so later cuts extend the
/// follow-up of the same patients.
pub fn simulate_cuts(truth: &Distribution, design: &TrialDesign, cuts: &[f64]) -> Result<Vec<SurvivalDataset>> {
    if design.n == 0 || !(design.accrual >= 0.0) {
        return Err(Error::Usage("trial needs patients and a nonnegative accrual period".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let latent = truth.sample_with(design.n, &mut rng);
    let entry: Vec<f64> = (0..design.n)
        .map(|_| design.accrual * rng.random::<f64>())
        .collect();
    cuts.iter()
        .map(|&cut| {
            if !(cut > design.accrual) {
                return Err(Error::Usage(format!(
                    "data cut {cut} must come after the end of accrual {}",
                    design.accrual
                )));
            }
            let records = latent
                .iter()
                .zip(&entry)
                .map(|(&t, &e)| {
                    let limit = cut - e;
                    Record {
                        time: t.min(limit),
                        event: t <= limit,
                    }
                })
                .collect();
            SurvivalDataset::new(records, "simulated")
        })
        .collect()
}

/// CSV text (`time,event`) for a dataset.
pub fn to_csv(data: &SurvivalDataset) -> String {
    let mut out = String::from("time,event\n");
    for r in data.records() {
        out.push_str(&format!("{},{}\n", r.time, u8::from(r.event)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_matches_anchors() {
        let d = reference_truth();
        assert!((d.survival(48.0) - 0.7).abs() < 1e-12);
        assert!((d.survival(180.0) - 0.013).abs() < 1e-12);
    }

    #[test]
    fn cuts_share_latent_times() {
        let design = TrialDesign { n: 400, accrual: 12.0, seed: 5 };
        let cuts = simulate_cuts(&reference_truth(), &design, &[48.0, 96.0]).unwrap();
        let (early, late) = (&cuts[0], &cuts[1]);
        assert!(early.max_time() <= 48.0);
        let censored = 1.0 - early.n_events() as f64 / early.len() as f64;
        assert!((0.62..0.8).contains(&censored), "censoring {censored}");
        for (a, b) in early.records().iter().zip(late.records()) {
            if a.event {
                assert_eq!(a, b);
            } else {
                assert!(b.time >= a.time);
            }
        }
        assert!(late.n_events() > early.n_events());
        let again = simulate_cuts(&reference_truth(), &design, &[48.0]).unwrap();
        assert_eq!(&again[0], early);
        assert!(simulate_cuts(&reference_truth(), &design, &[10.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let design = TrialDesign { n: 20, accrual: 6.0, seed: 1 };
        let d = &simulate_cuts(&reference_truth(), &design, &[30.0]).unwrap()[0];
        let back = crate::io::parse_datasets(to_csv(d).as_bytes(), crate::io::TimeUnit::Months).unwrap();
        assert_eq!(back[0].records(), d.records());
    }
}
