//! Draw matrices of survival and hazard curves on a common grid.

use serde::{Deserialize, Serialize};

use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::special::Grid;

/// Pointwise median and central 95% interval across draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub median: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    if w == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

pub(crate) fn summarize(rows: &[Vec<f64>], width: usize) -> CurveSummary {
    let mut median = Vec::with_capacity(width);
    let mut lo95 = Vec::with_capacity(width);
    let mut hi95 = Vec::with_capacity(width);
    let mut column = Vec::with_capacity(rows.len());
    for j in 0..width {
        column.clear();
        column.extend(rows.iter().map(|r| r[j]));
        column.sort_by(f64::total_cmp);
        median.push(quantile_sorted(&column, 0.5));
        lo95.push(quantile_sorted(&column, 0.025));
        hi95.push(quantile_sorted(&column, 0.975));
    }
    CurveSummary { median, lo95, hi95 }
}

fn check_rows(grid: &Grid, draws: &[Vec<f64>]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Usage("a curve needs at least one draw".into()));
    }
    if let Some(i) = draws.iter().position(|r| r.len() != grid.len()) {
        return Err(Error::Usage(format!(
            "draw {i} has {} values for a grid of {} points",
            draws[i].len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Survival-probability draws S(t) on a grid, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDraws {
    grid: Grid,
    draws: Vec<Vec<f64>>,
    summary: CurveSummary,
}

impl CurveDraws {
    pub fn new(grid: Grid, draws: Vec<Vec<f64>>) -> Result<Self> {
        check_rows(&grid, &draws)?;
        if draws.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numerical("survival values outside [0, 1]".into()));
        }
        let summary = summarize(&draws, grid.len());
        Ok(CurveDraws {
            grid,
            draws,
            summary,
        })
    }

    /// One row per distribution, evaluated analytically on the grid.
    pub fn from_distributions(grid: &Grid, dists: &[Distribution]) -> Result<Self> {
        let draws = dists
            .iter()
            .map(|d| grid.points().iter().map(|&t| d.survival(t)).collect())
            .collect();
        Self::new(grid.clone(), draws)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn summary(&self) -> &CurveSummary {
        &self.summary
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// -ln S per draw and grid point.
    pub fn cumulative_hazard(&self) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|r| r.iter().map(|s| -s.ln()).collect())
            .collect()
    }

    /// Index of the first draw that is not a proper survival function
    /// (S(0) = 1 and nonincreasing), if any.
    pub fn first_invalid_draw(&self) -> Option<usize> {
        self.draws.iter().position(|r| {
            (r[0] - 1.0).abs() > 1e-12 || r.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12))
        })
    }

    /// Draws resampled (with replacement, seeded) or truncated to `n` rows.
    pub fn resampled(&self, n: usize, seed: u64) -> Result<Self> {
        let rows = resample_rows(&self.draws, n, seed);
        Self::new(self.grid.clone(), rows)
    }
}

pub(crate) fn resample_rows(rows: &[Vec<f64>], n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    if rows.len() == n {
        return rows.to_vec();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rows[rng.random_range(0..rows.len())].clone())
        .collect()
}

/// Hazard draws on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardDraws {
    grid: Grid,
    draws: Vec<Vec<f64>>,
    summary: CurveSummary,
    /// Number of (draw, point) cells with a negative value.
    pub negative_cells: usize,
}

impl HazardDraws {
    pub fn new(grid: Grid, draws: Vec<Vec<f64>>) -> Result<Self> {
        check_rows(&grid, &draws)?;
        if draws.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Numerical("hazard draws contain NaN".into()));
        }
        let negative_cells = draws.iter().flatten().filter(|&&v| v < 0.0).count();
        let summary = summarize(&draws, grid.len());
        Ok(HazardDraws {
            grid,
            draws,
            summary,
            negative_cells,
        })
    }

    /// Analytic hazards; values that overflow are stored as +inf.
    pub fn from_distributions(grid: &Grid, dists: &[Distribution]) -> Result<Self> {
        let draws = dists
            .iter()
            .map(|d| {
                grid.points()
                    .iter()
                    .map(|&t| d.hazard(t).unwrap_or(f64::INFINITY))
                    .collect()
            })
            .collect();
        Self::new(grid.clone(), draws)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn summary(&self) -> &CurveSummary {
        &self.summary
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn curve_validation() {
        let grid = Grid::new(2.0, 1.0).unwrap();
        assert!(CurveDraws::new(grid.clone(), vec![]).is_err());
        assert!(CurveDraws::new(grid.clone(), vec![vec![1.0, 0.5]]).is_err());
        assert!(CurveDraws::new(grid.clone(), vec![vec![1.0, 0.5, 1.2]]).is_err());
        let c = CurveDraws::new(grid.clone(), vec![vec![1.0, 0.5, 0.6]]).unwrap();
        assert_eq!(c.first_invalid_draw(), Some(0));
        let ok = CurveDraws::new(grid, vec![vec![1.0, 0.5, 0.25], vec![1.0, 0.7, 0.5]]).unwrap();
        assert_eq!(ok.first_invalid_draw(), None);
        assert_eq!(ok.summary().median, vec![1.0, 0.6, 0.375]);
    }

    #[test]
    fn resampling_is_seeded() {
        let grid = Grid::new(1.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, 0.1 * i as f64]).collect();
        let c = CurveDraws::new(grid, rows).unwrap();
        let a = c.resampled(12, 3).unwrap();
        assert_eq!(a.n_draws(), 12);
        assert_eq!(a, c.resampled(12, 3).unwrap());
        assert_eq!(c.resampled(5, 3).unwrap(), c);
    }
}
