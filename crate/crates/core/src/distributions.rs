//! Parametric survival families.
//!
//! Parameterizations (time in months):
//!
//! | family        | parameters          | survival S(t)                          |
//! |---------------|---------------------|----------------------------------------|
//! | Exponential   | rate r              | exp(-r t)                              |
//! | Weibull       | shape k, scale s    | exp(-(t/s)^k)                          |
//! | Gompertz      | shape g, rate m     | exp(-(m/g)(exp(g t) - 1)), h = m e^(g t) |
//! | LogNormal     | meanlog, sdlog      | 1 - Phi((ln t - meanlog)/sdlog)        |
//! | LogLogistic   | shape k, scale s    | 1 / (1 + (t/s)^k)                      |
//! | Piecewise exp | rates, cutpoints    | exp(-sum of rate x overlap)            |
//!
//! The Gompertz shape may be negative, in which case the distribution is
//! defective (S(inf) = exp(m/g) > 0). As g -> 0 it reduces to the
//! Exponential with rate m.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Family {
    Exponential,
    Weibull,
    Gompertz,
    LogNormal,
    LogLogistic,
    PiecewiseExponential,
}

impl Family {
    /// The five standard families used for parametric fitting.
    pub const PARAMETRIC: [Family; 5] = [
        Family::Exponential,
        Family::Weibull,
        Family::Gompertz,
        Family::LogNormal,
        Family::LogLogistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "Exponential",
            Family::Weibull => "Weibull",
            Family::Gompertz => "Gompertz",
            Family::LogNormal => "LogNormal",
            Family::LogLogistic => "LogLogistic",
            Family::PiecewiseExponential => "PiecewiseExponential",
        }
    }

    /// Number of free parameters; `None` for the piecewise family, whose
    /// size depends on the partition.
    pub fn n_params(self) -> Option<usize> {
        match self {
            Family::Exponential => Some(1),
            Family::PiecewiseExponential => None,
            _ => Some(2),
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Exponential => &["rate"],
            Family::Weibull | Family::LogLogistic => &["shape", "scale"],
            Family::Gompertz => &["shape", "rate"],
            Family::LogNormal => &["meanlog", "sdlog"],
            Family::PiecewiseExponential => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "exponential" | "exp" => Ok(Family::Exponential),
            "weibull" => Ok(Family::Weibull),
            "gompertz" => Ok(Family::Gompertz),
            "lognormal" | "lnorm" => Ok(Family::LogNormal),
            "loglogistic" | "llogis" => Ok(Family::LogLogistic),
            "piecewiseexponential" | "pwexp" => Ok(Family::PiecewiseExponential),
            _ => Err(Error::Spec(format!("unknown distribution family '{s}'"))),
        }
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.name().to_string()
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Parameter values with parallel labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl ParamVector {
    pub fn new(family: Family, values: Vec<f64>) -> Self {
        let names = if family == Family::PiecewiseExponential {
            let k = values.len().div_ceil(2);
            (0..k)
                .map(|i| format!("rate[{}]", i + 1))
                .chain((1..k).map(|i| format!("cut[{i}]")))
                .collect()
        } else {
            family.param_names().iter().map(|s| s.to_string()).collect()
        };
        ParamVector { values, names }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// A fully parameterized survival distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Gompertz { shape: f64, rate: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    LogLogistic { shape: f64, scale: f64 },
    /// `cutpoints` are the interior boundaries u_1 < ... < u_{K-1}; the
    /// last rate applies from u_{K-1} onwards.
    PiecewiseExponential { cutpoints: Vec<f64>, rates: Vec<f64> },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParams(format!("{name} must be finite, got {v}")))
    }
}

impl Distribution {
    pub fn new(family: Family, params: &ParamVector) -> Result<Self> {
        Self::from_values(family, &params.values)
    }

    pub fn from_values(family: Family, v: &[f64]) -> Result<Self> {
        if let Some(k) = family.n_params() {
            if v.len() != k {
                return Err(Error::InvalidParams(format!(
                    "{family} takes {k} parameter(s), got {}",
                    v.len()
                )));
            }
        }
        Ok(match family {
            Family::Exponential => Distribution::Exponential {
                rate: positive("rate", v[0])?,
            },
            Family::Weibull => Distribution::Weibull {
                shape: positive("shape", v[0])?,
                scale: positive("scale", v[1])?,
            },
            Family::Gompertz => Distribution::Gompertz {
                shape: finite("shape", v[0])?,
                rate: positive("rate", v[1])?,
            },
            Family::LogNormal => Distribution::LogNormal {
                meanlog: finite("meanlog", v[0])?,
                sdlog: positive("sdlog", v[1])?,
            },
            Family::LogLogistic => Distribution::LogLogistic {
                shape: positive("shape", v[0])?,
                scale: positive("scale", v[1])?,
            },
            Family::PiecewiseExponential => {
                if v.len().is_multiple_of(2) {
                    return Err(Error::InvalidParams(
                        "piecewise exponential takes K rates followed by K-1 cutpoints".into(),
                    ));
                }
                let k = v.len().div_ceil(2);
                Distribution::piecewise(v[k..].to_vec(), v[..k].to_vec())?
            }
        })
    }

    pub fn piecewise(cutpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || cutpoints.len() + 1 != rates.len() {
            return Err(Error::InvalidParams(format!(
                "{} rates need {} interior cutpoints, got {}",
                rates.len(),
                rates.len().saturating_sub(1),
                cutpoints.len()
            )));
        }
        for &r in &rates {
            positive("piecewise rate", r)?;
        }
        let mut prev = 0.0;
        for &c in &cutpoints {
            if !(c > prev) || !c.is_finite() {
                return Err(Error::InvalidParams(
                    "piecewise cutpoints must be positive and strictly increasing".into(),
                ));
            }
            prev = c;
        }
        Ok(Distribution::PiecewiseExponential { cutpoints, rates })
    }

    pub fn family(&self) -> Family {
        match self {
            Distribution::Exponential { .. } => Family::Exponential,
            Distribution::Weibull { .. } => Family::Weibull,
            Distribution::Gompertz { .. } => Family::Gompertz,
            Distribution::LogNormal { .. } => Family::LogNormal,
            Distribution::LogLogistic { .. } => Family::LogLogistic,
            Distribution::PiecewiseExponential { .. } => Family::PiecewiseExponential,
        }
    }

    pub fn params(&self) -> ParamVector {
        let values = match self {
            Distribution::Exponential { rate } => vec![*rate],
            Distribution::Weibull { shape, scale } | Distribution::LogLogistic { shape, scale } => {
                vec![*shape, *scale]
            }
            Distribution::Gompertz { shape, rate } => vec![*shape, *rate],
            Distribution::LogNormal { meanlog, sdlog } => vec![*meanlog, *sdlog],
            Distribution::PiecewiseExponential { cutpoints, rates } => {
                rates.iter().chain(cutpoints.iter()).copied().collect()
            }
        };
        ParamVector::new(self.family(), values)
    }

    /// H(t) = -ln S(t). May be `+inf` where survival underflows.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Distribution::Exponential { rate } => rate * t,
            Distribution::Weibull { shape, scale } => (t / scale).powf(*shape),
            Distribution::Gompertz { shape, rate } => rate * gompertz_integral(*shape, t),
            Distribution::LogNormal { meanlog, sdlog } => {
                -ln_normal_upper((t.ln() - meanlog) / sdlog)
            }
            Distribution::LogLogistic { shape, scale } => (t / scale).powf(*shape).ln_1p(),
            Distribution::PiecewiseExponential { cutpoints, rates } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (k, rate) in rates.iter().enumerate() {
                    let hi = cutpoints.get(k).copied().unwrap_or(f64::INFINITY);
                    if t <= lo {
                        break;
                    }
                    acc += rate * (t.min(hi) - lo);
                    lo = hi;
                }
                acc
            }
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// Instantaneous hazard. Errors with a numerical-overflow diagnostic
    /// rather than returning a non-finite value.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("hazard requires t >= 0, got {t}")));
        }
        let h = match self {
            Distribution::Exponential { rate } => *rate,
            Distribution::Weibull { shape, scale } => {
                if t == 0.0 {
                    power_at_zero(*shape, shape / scale)
                } else {
                    shape / scale * (t / scale).powf(shape - 1.0)
                }
            }
            Distribution::Gompertz { shape, rate } => rate * (shape * t).exp(),
            Distribution::LogNormal { meanlog, sdlog } => {
                if t == 0.0 {
                    0.0
                } else {
                    let z = (t.ln() - meanlog) / sdlog;
                    let ln_pdf = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
                    (ln_pdf - sdlog.ln() - t.ln() - ln_normal_upper(z)).exp()
                }
            }
            Distribution::LogLogistic { shape, scale } => {
                if t == 0.0 {
                    power_at_zero(*shape, shape / scale)
                } else {
                    let r = (t / scale).powf(*shape);
                    shape / t * r / (1.0 + r)
                }
            }
            Distribution::PiecewiseExponential { cutpoints, rates } => {
                let k = cutpoints.partition_point(|&c| c <= t);
                rates[k]
            }
        };
        if h.is_finite() {
            Ok(h)
        } else {
            Err(Error::Numerical(format!(
                "hazard overflow for {} at t = {t}",
                self.family()
            )))
        }
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        Ok(self.hazard(t)? * self.survival(t))
    }

    /// Inverse of the cumulative hazard: the time at which H(t) = `target`.
    /// Returns `+inf` when the target is never reached (defective Gompertz).
    pub fn inverse_cumulative_hazard(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        match self {
            Distribution::Exponential { rate } => target / rate,
            Distribution::Weibull { shape, scale } => scale * target.powf(1.0 / shape),
            Distribution::Gompertz { shape, rate } => {
                if *shape == 0.0 {
                    target / rate
                } else {
                    let arg = shape * target / rate;
                    if arg <= -1.0 {
                        f64::INFINITY
                    } else {
                        arg.ln_1p() / shape
                    }
                }
            }
            Distribution::LogNormal { .. } => {
                // Bisection on the log-time scale; only used for lookups.
                let (mut lo, mut hi) = (-50.0f64, 50.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cumulative_hazard(mid.exp()) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
            Distribution::LogLogistic { shape, scale } => scale * target.exp_m1().powf(1.0 / shape),
            Distribution::PiecewiseExponential { cutpoints, rates } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (k, rate) in rates.iter().enumerate() {
                    let hi = cutpoints.get(k).copied().unwrap_or(f64::INFINITY);
                    let seg = rate * (hi - lo);
                    if acc + seg >= target {
                        return lo + (target - acc) / rate;
                    }
                    acc += seg;
                    lo = hi;
                }
                f64::INFINITY
            }
        }
    }

    /// `n` event times by inverse-CDF sampling, deterministic per seed.
    /// LogNormal draws use exp(meanlog + sdlog Z) directly.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| match self {
                Distribution::LogNormal { meanlog, sdlog } => {
                    let z: f64 = rng.sample(StandardNormal);
                    (meanlog + sdlog * z).exp()
                }
                _ => {
                    let u: f64 = rng.sample(Open01);
                    self.inverse_cumulative_hazard(-u.ln())
                }
            })
            .collect()
    }
}

fn power_at_zero(shape: f64, coef_at_one: f64) -> f64 {
    if shape < 1.0 {
        f64::INFINITY
    } else if shape == 1.0 {
        coef_at_one
    } else {
        0.0
    }
}

/// (exp(g t) - 1) / g with the g -> 0 limit.
pub(crate) fn gompertz_integral(shape: f64, t: f64) -> f64 {
    let x = shape * t;
    if x.abs() < 1e-8 {
        t * (1.0 + 0.5 * x)
    } else {
        x.exp_m1() / shape
    }
}

/// ln(1 - Phi(z)), accurate far into the upper tail.
pub(crate) fn ln_normal_upper(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    if x < 25.0 {
        (0.5 * libm::erfc(x)).ln()
    } else {
        // Asymptotic expansion of erfc for large arguments.
        let inv2 = 1.0 / (x * x);
        -x * x - (x * std::f64::consts::PI.sqrt()).ln() - std::f64::consts::LN_2
            + (1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2).ln()
    }
}

pub fn survival(family: Family, params: &ParamVector, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(Distribution::new(family, params)?.survival(t))
}

pub fn hazard(family: Family, params: &ParamVector, t: f64) -> Result<f64> {
    Distribution::new(family, params)?.hazard(t)
}

pub fn cumulative_hazard(family: Family, params: &ParamVector, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(Distribution::new(family, params)?.cumulative_hazard(t))
}

pub fn sample(family: Family, params: &ParamVector, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(Distribution::new(family, params)?.sample(n, seed))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be non-negative, got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(family: Family, v: &[f64]) -> ParamVector {
        ParamVector::new(family, v.to_vec())
    }

    #[test]
    fn exponential_survival() {
        let p = pv(Family::Exponential, &[0.1]);
        assert_eq!(survival(Family::Exponential, &p, 0.0).unwrap(), 1.0);
        let s = survival(Family::Exponential, &p, 10.0).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s - 0.367_879_4).abs() < 1e-7);
    }

    #[test]
    fn gompertz_small_shape_is_exponential() {
        let mu = 0.03;
        let d = Distribution::Gompertz { shape: 1e-9, rate: mu };
        for t in [0.0, 1.0, 17.5, 100.0, 400.0] {
            assert!((d.survival(t) - (-mu * t).exp()).abs() < 1e-8);
        }
        let zero = Distribution::Gompertz { shape: 0.0, rate: mu };
        assert!((zero.survival(50.0) - (-mu * 50.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn hazard_examples() {
        let e = pv(Family::Exponential, &[0.1]);
        assert_eq!(hazard(Family::Exponential, &e, 5.0).unwrap(), 0.1);
        let g = pv(Family::Gompertz, &[0.2, 0.01]);
        let h = hazard(Family::Gompertz, &g, 10.0).unwrap();
        assert!((h - 0.01 * 2f64.exp()).abs() < 1e-15);
        assert!((h - 0.073_890_6).abs() < 1e-7);
        let w = pv(Family::Weibull, &[1.0, 8.0]);
        for t in [0.0, 0.5, 3.0, 90.0] {
            assert!((hazard(Family::Weibull, &w, t).unwrap() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn hazard_overflow_is_flagged_not_nan() {
        let w = Distribution::Weibull { shape: 0.5, scale: 3.0 };
        assert!(matches!(w.hazard(0.0), Err(Error::Numerical(_))));
        let g = Distribution::Gompertz { shape: 10.0, rate: 1.0 };
        assert!(matches!(g.hazard(1000.0), Err(Error::Numerical(_))));
        let ln = Distribution::LogNormal { meanlog: 0.0, sdlog: 0.1 };
        let far = ln.hazard(1e6).unwrap();
        assert!(far.is_finite() && far > 0.0);
    }

    #[test]
    fn cumulative_hazard_examples() {
        let e = pv(Family::Exponential, &[0.1]);
        assert!((cumulative_hazard(Family::Exponential, &e, 10.0).unwrap() - 1.0).abs() < 1e-15);
        for fam in Family::PARAMETRIC {
            let d = default_for(fam);
            assert_eq!(d.cumulative_hazard(0.0), 0.0);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(Distribution::from_values(Family::Exponential, &[-1.0]).is_err());
        assert!(Distribution::from_values(Family::Weibull, &[1.0]).is_err());
        assert!(Distribution::from_values(Family::LogNormal, &[1.0, 0.0]).is_err());
        assert!(Distribution::from_values(Family::Gompertz, &[-0.5, 0.1]).is_ok());
        assert!(Distribution::piecewise(vec![5.0, 3.0], vec![0.1, 0.2, 0.3]).is_err());
        assert!(survival(Family::Exponential, &pv(Family::Exponential, &[0.1]), -1.0).is_err());
    }

    fn default_for(fam: Family) -> Distribution {
        match fam {
            Family::Exponential => Distribution::Exponential { rate: 0.05 },
            Family::Weibull => Distribution::Weibull { shape: 1.4, scale: 30.0 },
            Family::Gompertz => Distribution::Gompertz { shape: 0.02, rate: 0.01 },
            Family::LogNormal => Distribution::LogNormal { meanlog: 3.0, sdlog: 0.8 },
            Family::LogLogistic => Distribution::LogLogistic { shape: 2.0, scale: 20.0 },
            Family::PiecewiseExponential => {
                Distribution::piecewise(vec![10.0], vec![0.02, 0.05]).unwrap()
            }
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let d = Distribution::Exponential { rate: 1.0 };
        let xs = d.sample(100_000, 11);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert_eq!(xs, d.sample(100_000, 11));
        assert!(d.sample(0, 1).is_empty());
    }

    #[test]
    fn weibull_sample_mean() {
        let d = Distribution::Weibull { shape: 2.0, scale: 1.0 };
        let xs = d.sample(100_000, 5);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let expected = std::f64::consts::PI.sqrt() / 2.0;
        assert!((mean - expected).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn piecewise_single_interval_equals_exponential() {
        let pw = Distribution::piecewise(vec![], vec![0.07]).unwrap();
        let ex = Distribution::Exponential { rate: 0.07 };
        for i in 0..200 {
            let t = i as f64 * 1.7;
            assert_eq!(pw.survival(t), ex.survival(t));
            assert_eq!(pw.hazard(t).unwrap(), ex.hazard(t).unwrap());
            assert_eq!(pw.cumulative_hazard(t), ex.cumulative_hazard(t));
        }
    }

    #[test]
    fn piecewise_hazard_is_right_continuous() {
        let pw = Distribution::piecewise(vec![10.0, 20.0], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(pw.hazard(9.999).unwrap(), 0.1);
        assert_eq!(pw.hazard(10.0).unwrap(), 0.2);
        assert_eq!(pw.hazard(25.0).unwrap(), 0.3);
        assert!((pw.cumulative_hazard(25.0) - (1.0 + 2.0 + 1.5)).abs() < 1e-12);
        assert!((pw.inverse_cumulative_hazard(4.5) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("gompertz".parse::<Family>().unwrap(), Family::Gompertz);
        assert_eq!("log-normal".parse::<Family>().unwrap(), Family::LogNormal);
        assert_eq!("LogLogistic".parse::<Family>().unwrap(), Family::LogLogistic);
        assert!("cauchy".parse::<Family>().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn any_distribution() -> impl Strategy<Value = Distribution> {
            prop_oneof![
                (0.001..0.5f64).prop_map(|rate| Distribution::Exponential { rate }),
                (0.3..4.0f64, 1.0..100.0f64)
                    .prop_map(|(shape, scale)| Distribution::Weibull { shape, scale }),
                (-0.05..0.08f64, 0.001..0.1f64)
                    .prop_map(|(shape, rate)| Distribution::Gompertz { shape, rate }),
                (0.0..5.0f64, 0.2..2.0f64)
                    .prop_map(|(meanlog, sdlog)| Distribution::LogNormal { meanlog, sdlog }),
                (0.3..4.0f64, 1.0..100.0f64)
                    .prop_map(|(shape, scale)| Distribution::LogLogistic { shape, scale }),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn hazard_is_log_survival_derivative(d in any_distribution(), t in 0.5..150.0f64) {
                let step = 1e-4 * t;
                let fd = (d.cumulative_hazard(t + step) - d.cumulative_hazard(t - step)) / (2.0 * step);
                let h = d.hazard(t).unwrap();
                prop_assert!((fd - h).abs() <= (1e-5f64).max(1e-4 * h), "fd {} h {}", fd, h);
            }

            #[test]
            fn survival_is_monotone(d in any_distribution(), spacing in 0.1..5.0f64) {
                let mut prev = 1.0;
                for i in 0..300 {
                    let s = d.survival(i as f64 * spacing);
                    prop_assert!((0.0..=1.0).contains(&s));
                    prop_assert!(s <= prev);
                    prev = s;
                }
            }

            #[test]
            fn survival_is_exp_minus_cumhaz(d in any_distribution(), t in 0.0..300.0f64) {
                prop_assert!(((-d.cumulative_hazard(t)).exp() - d.survival(t)).abs() < 1e-10);
            }
        }
    }
}
