//! Special functions and quadrature used throughout the crate.
//!
//! Only what the blending engine needs: log-gamma, the Beta distribution
//! (regularized incomplete beta and density) and trapezoid integration on
//! an evaluation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Natural logarithm of the Gamma function for positive arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_pos(x))
}

fn ln_gamma_pos(x: f64) -> f64 {
    if x >= 10.0 {
        // Stirling series; truncation error below 1e-14 relative from x = 10.
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        let series = inv
            * (1.0 / 12.0
                - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0))));
        return (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + series;
    }
    if x < 0.5 {
        // Shift up: Gamma(x) = Gamma(x + 1) / x.
        return ln_gamma_pos(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_TWO_PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Logarithm of the Beta function B(a, b).
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}

fn check_beta_args(x: f64, alpha: f64, beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta argument must lie in [0, 1], got {x}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!(
            "beta shapes must be positive and finite, got ({alpha}, {beta})"
        )));
    }
    Ok(())
}

/// Regularized incomplete beta function I_x(alpha, beta), the Beta CDF.
pub fn beta_cdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_beta_args(x, alpha, beta)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = alpha * x.ln() + beta * (-x).ln_1p() - log_beta(alpha, beta)?;
    let front = ln_front.exp();
    let value = if x < (alpha + 1.0) / (alpha + beta + 2.0) {
        front * beta_continued_fraction(x, alpha, beta) / alpha
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, beta, alpha) / beta
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Beta density. Returns `f64::INFINITY` at a boundary where the density
/// is singular (x = 0 with alpha < 1, or x = 1 with beta < 1).
pub fn beta_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_beta_args(x, alpha, beta)?;
    if (x == 0.0 && alpha < 1.0) || (x == 1.0 && beta < 1.0) {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(if alpha == 1.0 { (-log_beta(1.0, beta)?).exp() } else { 0.0 });
    }
    if x == 1.0 {
        return Ok(if beta == 1.0 { (-log_beta(alpha, 1.0)?).exp() } else { 0.0 });
    }
    let ln = (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - log_beta(alpha, beta)?;
    Ok(ln.exp())
}

/// Ordered evaluation points over [0, T*], in months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    spacing: f64,
}

impl Grid {
    /// Regular grid from 0 to `horizon`. The last step is shortened when
    /// `horizon` is not a multiple of `spacing`.
    pub fn new(horizon: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Usage(format!("grid spacing must be positive, got {spacing}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Usage(format!("grid horizon must be positive, got {horizon}")));
        }
        let steps = (horizon / spacing - 1e-9).ceil() as usize;
        let mut points: Vec<f64> = (0..steps).map(|i| i as f64 * spacing).collect();
        points.push(horizon);
        Ok(Grid { points, spacing })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Usage("a grid needs at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Usage("grid must start at 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Usage("grid points must be finite and strictly increasing".into()));
        }
        let spacing = points[points.len() - 1] / (points.len() - 1) as f64;
        Ok(Grid { points, spacing })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Composite trapezoid rule of `values` sampled on `grid`.
pub fn trapezoid_integrate(values: &[f64], grid: &Grid) -> Result<f64> {
    trapezoid(values, grid.points())
}

pub(crate) fn trapezoid(values: &[f64], points: &[f64]) -> Result<f64> {
    if values.len() != points.len() {
        return Err(Error::Usage(format!(
            "{} values supplied for a grid of {} points",
            values.len(),
            points.len()
        )));
    }
    if values.len() < 2 {
        return Err(Error::Usage("trapezoid rule needs at least two points".into()));
    }
    Ok(points
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum())
}
