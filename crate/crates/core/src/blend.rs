//! Blending of an observed-data survival curve with an external long-term
//! curve.
//!
//! With weight w(t) = F_Beta((t - a)/(b - a); alpha, beta), clamped to 0
//! before `a` and 1 after `b`,
//!
//! ```text
//! S_ble(t) = S_obs(t)^(1 - w(t)) * S_ext(t)^w(t)
//! h_ble(t) = (1 - w) h_obs + w h_ext + f_Beta((t - a)/(b - a)) / (b - a) * (H_ext - H_obs)
//! ```
//!
//! Blending is done in the log domain. Outside the open blending interval
//! the source curve is copied unchanged, so `a = T*` reproduces the
//! observed curve bit for bit.

use serde::{Deserialize, Serialize};

use crate::curves::{quantile_sorted, CurveDraws, HazardDraws};
use crate::error::{Error, Result};
use crate::special::{beta_cdf, beta_pdf, trapezoid, Grid};

/// Survival values are floored here before taking logs.
const SURVIVAL_FLOOR: f64 = 1e-300;

/// Weight-function shape, blending interval and horizon (months).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendSpec {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
}

impl BlendSpec {
    /// Requires alpha, beta > 0 and 0 <= a < b <= T*. The one exception is
    /// `a = T*` (no blending at all), where `b` may equal `a`.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha) || !positive(self.beta) {
            return Err(Error::Spec(format!(
                "weight shapes must be positive, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if !positive(self.horizon) {
            return Err(Error::Spec(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.is_degenerate() {
            return Ok(());
        }
        if !(self.a >= 0.0 && self.a < self.b && self.b <= self.horizon) {
            return Err(Error::Spec(format!(
                "blending interval must satisfy 0 <= a < b <= T*, got a = {}, b = {}, T* = {}",
                self.a, self.b, self.horizon
            )));
        }
        Ok(())
    }

    /// True when the blending interval starts at the horizon.
    pub fn is_degenerate(&self) -> bool {
        self.a == self.horizon && self.b >= self.a
    }

    fn rescale(&self, t: f64) -> f64 {
        (t - self.a) / (self.b - self.a)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain(format!("t = {t} lies outside [0, {}]", self.horizon)))
        }
    }
}

/// The blending weight w(t).
pub fn weight(t: f64, spec: &BlendSpec) -> Result<f64> {
    spec.validate()?;
    spec.check_time(t)?;
    Ok(weight_unchecked(t, spec))
}

fn weight_unchecked(t: f64, spec: &BlendSpec) -> f64 {
    if t <= spec.a {
        0.0
    } else if t >= spec.b {
        1.0
    } else {
        beta_cdf(spec.rescale(t), spec.alpha, spec.beta).expect("validated blend spec")
    }
}

/// dw/dt: the Beta density on the rescaled interval divided by (b - a),
/// zero outside the open interval (a, b).
pub fn weight_density(t: f64, spec: &BlendSpec) -> Result<f64> {
    spec.validate()?;
    spec.check_time(t)?;
    Ok(weight_density_unchecked(t, spec))
}

fn weight_density_unchecked(t: f64, spec: &BlendSpec) -> f64 {
    if t <= spec.a || t >= spec.b {
        0.0
    } else {
        beta_pdf(spec.rescale(t), spec.alpha, spec.beta).expect("validated blend spec")
            / (spec.b - spec.a)
    }
}

/// Weight and its derivative tabulated on a grid.
pub fn weight_table(grid: &Grid, spec: &BlendSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let pts = grid.points();
    if grid.horizon() > spec.horizon {
        return Err(Error::Usage(format!(
            "grid extends to {} beyond the horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    Ok((
        pts.iter().map(|&t| weight_unchecked(t, spec)).collect(),
        pts.iter().map(|&t| weight_density_unchecked(t, spec)).collect(),
    ))
}

fn check_pair(g1: &Grid, n1: usize, g2: &Grid, n2: usize, spec: &BlendSpec) -> Result<()> {
    spec.validate()?;
    if g1.points() != g2.points() {
        return Err(Error::Usage("observed and external curves use different grids".into()));
    }
    if g1.horizon() > spec.horizon {
        return Err(Error::Usage(format!(
            "grid extends to {} beyond the horizon {}",
            g1.horizon(),
            spec.horizon
        )));
    }
    if n1 != n2 && n1 != 1 && n2 != 1 {
        return Err(Error::Usage(format!(
            "draw counts differ ({n1} vs {n2}); pair the draws first"
        )));
    }
    Ok(())
}

/// Index pairs matching `n_obs` observed draws with `n_ext` external draws.
/// The smaller set is resampled with replacement (seeded); a single draw
/// is broadcast.
pub fn pairing_indices(n_obs: usize, n_ext: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = n_obs.max(n_ext);
    let mut pick = |len: usize| -> Vec<usize> {
        if len == n {
            (0..n).collect()
        } else if len == 1 {
            vec![0; n]
        } else {
            (0..n).map(|_| rng.random_range(0..len)).collect()
        }
    };
    let obs = pick(n_obs);
    let ext = pick(n_ext);
    (obs, ext)
}

fn row(draws: &[Vec<f64>], i: usize) -> &[f64] {
    if draws.len() == 1 {
        &draws[0]
    } else {
        &draws[i]
    }
}

/// Blended survival draws, pairing rows by index.
pub fn blend_survival(s_obs: &CurveDraws, s_ext: &CurveDraws, spec: &BlendSpec) -> Result<CurveDraws> {
    check_pair(s_obs.grid(), s_obs.n_draws(), s_ext.grid(), s_ext.n_draws(), spec)?;
    let grid = s_obs.grid();
    let weights: Vec<f64> = grid.points().iter().map(|&t| weight_unchecked(t, spec)).collect();
    let n = s_obs.n_draws().max(s_ext.n_draws());
    let rows = (0..n)
        .map(|i| {
            let (o, e) = (row(s_obs.draws(), i), row(s_ext.draws(), i));
            weights
                .iter()
                .enumerate()
                .map(|(j, &w)| {
                    if w == 0.0 {
                        o[j]
                    } else if w == 1.0 {
                        e[j]
                    } else {
                        let lo = o[j].max(SURVIVAL_FLOOR).ln();
                        let le = e[j].max(SURVIVAL_FLOOR).ln();
                        ((1.0 - w) * lo + w * le).exp()
                    }
                })
                .collect()
        })
        .collect();
    CurveDraws::new(grid.clone(), rows)
}

/// Blended hazard draws from hazards and cumulative hazards of both curves.
pub fn blend_hazard(
    h_obs: &HazardDraws,
    h_ext: &HazardDraws,
    cum_obs: &[Vec<f64>],
    cum_ext: &[Vec<f64>],
    spec: &BlendSpec,
) -> Result<HazardDraws> {
    check_pair(h_obs.grid(), h_obs.n_draws(), h_ext.grid(), h_ext.n_draws(), spec)?;
    if cum_obs.len() != h_obs.n_draws() || cum_ext.len() != h_ext.n_draws() {
        return Err(Error::Usage("cumulative hazards must match the hazard draws".into()));
    }
    let grid = h_obs.grid();
    let width = grid.len();
    if cum_obs.iter().chain(cum_ext).any(|r| r.len() != width) {
        return Err(Error::Usage("cumulative hazard rows must match the grid".into()));
    }
    let pts = grid.points();
    let weights: Vec<f64> = pts.iter().map(|&t| weight_unchecked(t, spec)).collect();
    let dens: Vec<f64> = pts.iter().map(|&t| weight_density_unchecked(t, spec)).collect();
    let n = h_obs.n_draws().max(h_ext.n_draws());
    let rows = (0..n)
        .map(|i| {
            let (ho, he) = (row(h_obs.draws(), i), row(h_ext.draws(), i));
            let (co, ce) = (row(cum_obs, i), row(cum_ext, i));
            (0..width)
                .map(|j| {
                    let t = pts[j];
                    if t <= spec.a {
                        ho[j]
                    } else if t >= spec.b {
                        he[j]
                    } else {
                        let w = weights[j];
                        (1.0 - w) * ho[j] + w * he[j] + dens[j] * (ce[j] - co[j])
                    }
                })
                .collect()
        })
        .collect();
    HazardDraws::new(grid.clone(), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendDiagnostics {
    /// Set when some draw has H_ext < H_obs somewhere in [a, b], the case
    /// in which the blended hazard can turn negative.
    pub non_monotone_risk: bool,
    pub draws_at_risk: usize,
    pub negative_hazard_cells: usize,
    pub nonincreasing_survival_violations: usize,
}

/// Checks the H_ext >= H_obs condition on [a, b] and inspects the
/// blended curves for negative hazards or increasing survival.
pub fn blend_diagnostics(
    cum_obs: &[Vec<f64>],
    cum_ext: &[Vec<f64>],
    grid: &Grid,
    spec: &BlendSpec,
    blended_survival: &CurveDraws,
    blended_hazard: &HazardDraws,
) -> BlendDiagnostics {
    let pts = grid.points();
    let n = cum_obs.len().max(cum_ext.len());
    let draws_at_risk = if spec.is_degenerate() {
        0
    } else {
        (0..n)
            .filter(|&i| {
                let (co, ce) = (row(cum_obs, i), row(cum_ext, i));
                pts.iter()
                    .enumerate()
                    .any(|(j, &t)| t >= spec.a && t <= spec.b && ce[j] < co[j])
            })
            .count()
    };
    let nonincreasing_survival_violations = blended_survival
        .draws()
        .iter()
        .filter(|r| r.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)))
        .count();
    BlendDiagnostics {
        non_monotone_risk: draws_at_risk > 0,
        draws_at_risk,
        negative_hazard_cells: blended_hazard.negative_cells,
        nonincreasing_survival_violations,
    }
}

/// Mean, median and central 95% interval of a scalar across draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl DrawSummary {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.sort_by(f64::total_cmp);
        DrawSummary {
            mean,
            median: quantile_sorted(&values, 0.5),
            lo95: quantile_sorted(&values, 0.025),
            hi95: quantile_sorted(&values, 0.975),
        }
    }
}

fn locate(grid: &Grid, t: f64) -> Result<(usize, f64)> {
    let pts = grid.points();
    if !(0.0..=grid.horizon()).contains(&t) {
        return Err(Error::Domain(format!(
            "t = {t} lies outside the grid [0, {}]",
            grid.horizon()
        )));
    }
    let hi = pts.partition_point(|&p| p < t);
    if pts[hi] == t {
        return Ok((hi, 0.0));
    }
    let lo = hi - 1;
    Ok((lo, (t - pts[lo]) / (pts[hi] - pts[lo])))
}

fn interpolate_log(row: &[f64], lo: usize, frac: f64) -> f64 {
    if frac == 0.0 {
        return row[lo];
    }
    let (s0, s1) = (row[lo], row[lo + 1]);
    if s0 <= 0.0 || s1 <= 0.0 {
        s0 + frac * (s1 - s0)
    } else {
        ((1.0 - frac) * s0.ln() + frac * s1.ln()).exp()
    }
}

/// Restricted mean survival time up to `upto`, per draw.
pub fn rmst(curve: &CurveDraws, upto: f64) -> Result<DrawSummary> {
    let (lo, frac) = locate(curve.grid(), upto)?;
    let pts = curve.grid().points();
    let values = curve
        .draws()
        .iter()
        .map(|r| {
            let mut area = if lo == 0 { 0.0 } else { trapezoid(&r[..=lo], &pts[..=lo])? };
            if frac > 0.0 {
                let s_end = r[lo] + frac * (r[lo + 1] - r[lo]);
                area += 0.5 * (upto - pts[lo]) * (r[lo] + s_end);
            }
            Ok(area)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DrawSummary::from_values(values))
}

/// Survival at `t` per draw, interpolated linearly in log-survival
/// between grid points.
pub fn survival_at(curve: &CurveDraws, t: f64) -> Result<DrawSummary> {
    Ok(DrawSummary::from_values(survival_at_draws(curve, t)?))
}

pub fn survival_at_draws(curve: &CurveDraws, t: f64) -> Result<Vec<f64>> {
    let (lo, frac) = locate(curve.grid(), t)?;
    Ok(curve.draws().iter().map(|r| interpolate_log(r, lo, frac)).collect())
}
