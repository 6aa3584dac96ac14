//! Bayesian piecewise-constant hazard model for the observed arm.
//!
//! Follow-up is split into K intervals with one log-hazard per interval.
//! A Gaussian random walk of order one or two on the log-hazards smooths
//! neighbouring levels and, past the end of follow-up, generates the
//! extrapolated levels from its predictive distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curves::{CurveDraws, HazardDraws};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::special::Grid;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Default width of extrapolation intervals, months.
pub const EXTRAPOLATION_WIDTH: f64 = 6.0;

/// Cut points 0 = u_0 < ... < u_K (fitted) < ... < u_total (extrapolation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    cutpoints: Vec<f64>,
    n_fitted: usize,
    /// Set when event-time quantiles could not be used.
    pub equal_width_fallback: bool,
}

impl IntervalPartition {
    /// `cutpoints` must start at 0 and increase strictly; the first
    /// `n_fitted` intervals are estimated from data, the rest extrapolated.
    pub fn new(cutpoints: Vec<f64>, n_fitted: usize) -> Result<Self> {
        if cutpoints.len() < 2 || cutpoints[0] != 0.0 {
            return Err(Error::Usage("partition must start at 0 and have an interval".into()));
        }
        if cutpoints.windows(2).any(|w| !(w[1] > w[0])) || !cutpoints.iter().all(|c| c.is_finite())
        {
            return Err(Error::Usage("partition cut points must strictly increase".into()));
        }
        if n_fitted == 0 || n_fitted > cutpoints.len() - 1 {
            return Err(Error::Usage(format!(
                "{n_fitted} fitted intervals for a partition of {}",
                cutpoints.len() - 1
            )));
        }
        Ok(IntervalPartition {
            cutpoints,
            n_fitted,
            equal_width_fallback: false,
        })
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    /// K, the number of intervals fitted to data.
    pub fn n_fitted(&self) -> usize {
        self.n_fitted
    }

    pub fn n_total(&self) -> usize {
        self.cutpoints.len() - 1
    }

    /// End of the fitted region, u_K.
    pub fn follow_up_end(&self) -> f64 {
        self.cutpoints[self.n_fitted]
    }

    /// Drops extrapolation intervals and appends new ones of `width` up
    /// to `horizon` (the last one may be shorter).
    pub fn extended_to(&self, horizon: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Usage("extrapolation width must be positive".into()));
        }
        let mut cutpoints = self.cutpoints[..=self.n_fitted].to_vec();
        let mut last = self.follow_up_end();
        while horizon - last > 1e-9 {
            last = (last + width).min(horizon);
            if horizon - last < 1e-9 {
                last = horizon;
            }
            cutpoints.push(last);
        }
        Ok(IntervalPartition {
            cutpoints,
            n_fitted: self.n_fitted,
            equal_width_fallback: self.equal_width_fallback,
        })
    }

    fn interval_of(&self, t: f64) -> usize {
        // Interval k covers (u_{k-1}, u_k].
        let k = self.cutpoints.partition_point(|&c| c < t);
        k.clamp(1, self.n_total()) - 1
    }
}

fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    crate::curves::quantile_sorted(sorted, p)
}

/// Partition with interior cut points at event-time quantiles, so each
/// fitted interval holds roughly the same number of events, then 6-month
/// extrapolation intervals up to `horizon`.
pub fn make_partition(data: &SurvivalDataset, k: usize, horizon: f64) -> Result<IntervalPartition> {
    make_partition_with(data, k, horizon, EXTRAPOLATION_WIDTH)
}

pub fn make_partition_with(
    data: &SurvivalDataset,
    k: usize,
    horizon: f64,
    extrapolation_width: f64,
) -> Result<IntervalPartition> {
    if k == 0 {
        return Err(Error::Usage("need at least one interval".into()));
    }
    let end = data.max_time();
    let events = data.event_times();
    let mut distinct = events.clone();
    distinct.dedup();

    let mut cuts = vec![0.0];
    let mut fallback = false;
    if k > 1 {
        let quantile_cuts: Vec<f64> =
            (1..k).map(|j| quantile_type7(&events, j as f64 / k as f64)).collect();
        let usable = distinct.len() >= k
            && quantile_cuts.iter().all(|&c| c > 0.0 && c < end)
            && quantile_cuts.windows(2).all(|w| w[1] > w[0]);
        if usable {
            cuts.extend(quantile_cuts);
        } else {
            log::warn!(
                "{} distinct event times cannot support {k} quantile intervals; using equal widths",
                distinct.len()
            );
            fallback = true;
            cuts.extend((1..k).map(|j| end * j as f64 / k as f64));
        }
    }
    cuts.push(end);
    let mut partition = IntervalPartition::new(cuts, k)?;
    partition.equal_width_fallback = fallback;
    if horizon > end {
        partition = partition.extended_to(horizon, extrapolation_width)?;
    }
    Ok(partition)
}

/// Events and exposure per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCounts {
    pub events: Vec<f64>,
    pub exposure: Vec<f64>,
}

/// Tabulates events and exposure over the first `n_intervals` intervals.
pub fn interval_counts(
    partition: &IntervalPartition,
    n_intervals: usize,
    data: &SurvivalDataset,
) -> Result<IntervalCounts> {
    let end = partition.cutpoints[n_intervals];
    if data.max_time() > end {
        return Err(Error::Usage(format!(
            "partition ends at {end} but data extend to {}",
            data.max_time()
        )));
    }
    let cuts = &partition.cutpoints;
    let mut events = vec![0.0; n_intervals];
    let mut exposure = vec![0.0; n_intervals];
    for r in data.records() {
        let k = partition.interval_of(r.time);
        for j in 0..k {
            exposure[j] += cuts[j + 1] - cuts[j];
        }
        exposure[k] += r.time - cuts[k];
        if r.event {
            events[k] += 1.0;
        }
    }
    Ok(IntervalCounts { events, exposure })
}

/// Piecewise-exponential log-likelihood sum_k [d_k l_k - exp(l_k) E_k].
pub fn piecewise_loglik(
    partition: &IntervalPartition,
    log_hazards: &[f64],
    data: &SurvivalDataset,
) -> Result<f64> {
    if log_hazards.is_empty() || log_hazards.len() > partition.n_total() {
        return Err(Error::Usage(format!(
            "{} log-hazards for a partition of {} intervals",
            log_hazards.len(),
            partition.n_total()
        )));
    }
    let counts = interval_counts(partition, log_hazards.len(), data)?;
    Ok(counts_loglik(&counts, log_hazards))
}

fn counts_loglik(counts: &IntervalCounts, log_hazards: &[f64]) -> f64 {
    log_hazards
        .iter()
        .zip(counts.events.iter().zip(&counts.exposure))
        .map(|(&l, (&d, &e))| d * l - l.exp() * e)
        .sum()
}

/// Precision of the random-walk increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Fixed(f64),
    /// Gamma(shape, rate) hyperprior, updated by Gibbs sampling.
    Gamma { shape: f64, rate: f64 },
}

impl Default for Precision {
    fn default() -> Self {
        Precision::Gamma {
            shape: 1.0,
            rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwPrior {
    pub order: u8,
    pub precision: Precision,
}

impl Default for RwPrior {
    fn default() -> Self {
        RwPrior {
            order: 1,
            precision: Precision::default(),
        }
    }
}

impl RwPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.order == 1 || self.order == 2) {
            return Err(Error::Spec(format!("random-walk order must be 1 or 2, got {}", self.order)));
        }
        match self.precision {
            Precision::Fixed(tau) if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::Spec(format!("precision must be positive, got {tau}")))
            }
            Precision::Gamma { shape, rate } if !(shape > 0.0 && rate > 0.0) => Err(Error::Spec(
                format!("Gamma hyperprior needs positive shape and rate, got ({shape}, {rate})"),
            )),
            _ => Ok(()),
        }
    }
}

fn differences(order: u8, l: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let o = order as usize;
    (o..l.len()).map(move |k| {
        if o == 1 {
            l[k] - l[k - 1]
        } else {
            l[k] - 2.0 * l[k - 1] + l[k - 2]
        }
    })
}

/// Log prior density of the log-hazards under the random walk at
/// precision `tau`, plus the Gamma hyperprior density of `tau` when one
/// is specified. The first (RW2: first two) levels carry a flat prior.
/// With a fixed precision, `tau` is ignored.
pub fn log_prior(rw: &RwPrior, log_hazards: &[f64], tau: f64) -> f64 {
    let tau = match rw.precision {
        Precision::Fixed(t) => t,
        Precision::Gamma { .. } => tau,
    };
    let mut lp: f64 = differences(rw.order, log_hazards)
        .map(|d| 0.5 * tau.ln() - 0.5 * LN_2PI - 0.5 * tau * d * d)
        .sum();
    if let Precision::Gamma { shape, rate } = rw.precision {
        lp += shape * rate.ln() - crate::special::log_gamma(shape).unwrap_or(f64::NAN)
            + (shape - 1.0) * tau.ln()
            - rate * tau;
    }
    lp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Retained draws per chain.
    pub n_draws: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_draws: 2000,
            burn_in: 2000,
            chains: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    /// Post-burn-in acceptance rate per fitted interval, pooled over chains.
    pub acceptance: Vec<f64>,
    /// Effective sample size per fitted interval, summed over chains.
    pub ess: Vec<f64>,
    /// Posterior mean log-hazard per chain and fitted interval.
    pub chain_means: Vec<Vec<f64>>,
    /// Monte-Carlo standard error of the pooled posterior mean.
    pub mcse: Vec<f64>,
    /// -2 x log-likelihood at the posterior mean of the log-hazards.
    pub deviance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePosterior {
    pub partition: IntervalPartition,
    /// One row per retained draw (chains concatenated in order), one
    /// column per interval including extrapolation intervals.
    pub draws: Vec<Vec<f64>>,
    /// Precision per draw.
    pub tau: Vec<f64>,
    pub prior: RwPrior,
    pub diagnostics: McmcDiagnostics,
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    tau: Vec<f64>,
    accepted: Vec<usize>,
}

/// Component-wise adaptive random-walk Metropolis over the fitted
/// log-hazards; the precision gets a conjugate Gibbs step under a Gamma
/// hyperprior. Step sizes adapt during burn-in only.
pub fn fit_mcmc(
    data: &SurvivalDataset,
    partition: &IntervalPartition,
    rw: &RwPrior,
    config: &McmcConfig,
) -> Result<PiecewisePosterior> {
    rw.validate()?;
    if config.n_draws == 0 || config.chains == 0 {
        return Err(Error::Spec("need at least one chain and one draw".into()));
    }
    let total_events = data.n_events();
    if total_events == 0 {
        return Err(Error::Data("cannot fit the piecewise model: no events".into()));
    }
    let k = partition.n_fitted();
    let counts = interval_counts(partition, k, data)?;
    let crude = (total_events as f64 / data.total_time()).ln();

    let chains: Vec<ChainOutput> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let counts = &counts;
                let offset = c as f64 - (config.chains as f64 - 1.0) / 2.0;
                scope.spawn(move || {
                    run_chain(counts, partition, rw, config, c as u64, crude + offset)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain panicked")).collect::<Vec<_>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let n_iter = (config.n_draws * config.chains) as f64;
    let acceptance = (0..k)
        .map(|j| chains.iter().map(|ch| ch.accepted[j]).sum::<usize>() as f64 / n_iter)
        .collect();
    let chain_means: Vec<Vec<f64>> = chains
        .iter()
        .map(|ch| {
            (0..k)
                .map(|j| ch.draws.iter().map(|d| d[j]).sum::<f64>() / ch.draws.len() as f64)
                .collect()
        })
        .collect();
    let ess: Vec<f64> = (0..k)
        .map(|j| {
            chains
                .iter()
                .map(|ch| effective_sample_size(&ch.draws.iter().map(|d| d[j]).collect::<Vec<_>>()))
                .sum()
        })
        .collect();

    let mut draws = Vec::with_capacity(config.n_draws * config.chains);
    let mut tau = Vec::with_capacity(draws.capacity());
    for ch in chains {
        draws.extend(ch.draws);
        tau.extend(ch.tau);
    }
    let mean: Vec<f64> = (0..k)
        .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / draws.len() as f64)
        .collect();
    let mcse = (0..k)
        .map(|j| {
            let m = mean[j];
            let var = draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>()
                / (draws.len().max(2) - 1) as f64;
            (var / ess[j].max(1.0)).sqrt()
        })
        .collect();
    let deviance = -2.0 * counts_loglik(&counts, &mean);

    Ok(PiecewisePosterior {
        partition: partition.clone(),
        draws,
        tau,
        prior: *rw,
        diagnostics: McmcDiagnostics {
            acceptance,
            ess,
            chain_means,
            mcse,
            deviance,
        },
    })
}

fn run_chain(
    counts: &IntervalCounts,
    partition: &IntervalPartition,
    rw: &RwPrior,
    config: &McmcConfig,
    chain: u64,
    init_level: f64,
) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain);
    let k = partition.n_fitted();

    let mut state = vec![init_level; k];
    let mut tau = match rw.precision {
        Precision::Fixed(t) => t,
        Precision::Gamma { shape, rate } => shape / rate,
    };
    let target = |l: &[f64], tau: f64| counts_loglik(counts, l) + log_prior(rw, l, tau);
    let mut current = target(&state, tau);
    if !current.is_finite() {
        return Err(Error::Numerical(format!(
            "log posterior is not finite at the initial state (chain {chain})"
        )));
    }
    let mut log_step: Vec<f64> = counts
        .events
        .iter()
        .map(|d| (1.0 / (d + 1.0)).sqrt().ln())
        .collect();

    let total = config.burn_in + config.n_draws;
    let mut draws = Vec::with_capacity(config.n_draws);
    let mut taus = Vec::with_capacity(config.n_draws);
    let mut accepted = vec![0usize; k];
    for iter in 0..total {
        let burning = iter < config.burn_in;
        for j in 0..k {
            let old = state[j];
            let z: f64 = rng.sample(StandardNormal);
            state[j] = old + log_step[j].exp() * z;
            let proposed = target(&state, tau);
            let log_ratio = proposed - current;
            let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
            if accept {
                current = proposed;
            } else {
                state[j] = old;
            }
            if burning {
                let gain = (iter as f64 + 1.0).powf(-0.6);
                let rate = log_ratio.min(0.0).exp();
                log_step[j] += gain * (rate - 0.44);
            } else if accept {
                accepted[j] += 1;
            }
        }
        if let Precision::Gamma { shape, rate } = rw.precision {
            let n_incr = k.saturating_sub(rw.order as usize) as f64;
            let ss: f64 = differences(rw.order, &state).map(|d| d * d).sum();
            let gamma = Gamma::new(shape + 0.5 * n_incr, 1.0 / (rate + 0.5 * ss))
                .map_err(|e| Error::Numerical(format!("precision update: {e}")))?;
            tau = rng.sample(gamma);
            current = target(&state, tau);
        }
        if !burning {
            draws.push(extrapolate(&state, partition.n_total(), rw.order, tau, &mut rng));
            taus.push(tau);
        }
    }
    Ok(ChainOutput {
        draws,
        tau: taus,
        accepted,
    })
}

/// Extends fitted log-hazards to `n_total` intervals with the random-walk
/// predictive at precision `tau`.
fn extrapolate<R: Rng>(fitted: &[f64], n_total: usize, order: u8, tau: f64, rng: &mut R) -> Vec<f64> {
    let mut out = fitted.to_vec();
    let sd = tau.recip().sqrt();
    while out.len() < n_total {
        let n = out.len();
        let z: f64 = rng.sample(StandardNormal);
        let mean = if order == 2 && n >= 2 {
            2.0 * out[n - 1] - out[n - 2]
        } else {
            out[n - 1]
        };
        out.push(mean + sd * z);
    }
    out
}

/// Effective sample size from the initial positive sequence of
/// autocorrelations.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    n as f64 / (1.0 + 2.0 * sum).max(1e-12)
}

impl PiecewisePosterior {
    /// Cumulative hazard draws on a grid.
    pub fn cumulative_hazard(&self, grid: &Grid) -> Vec<Vec<f64>> {
        self.draws.iter().map(|l| self.cumulative_hazard_row(l, grid)).collect()
    }

    fn cumulative_hazard_row(&self, log_hazards: &[f64], grid: &Grid) -> Vec<f64> {
        let cuts = self.partition.cutpoints();
        let rates: Vec<f64> = log_hazards.iter().map(|l| l.exp()).collect();
        grid.points()
            .iter()
            .map(|&t| {
                let mut acc = 0.0;
                for (k, rate) in rates.iter().enumerate() {
                    let lo = cuts[k];
                    if t <= lo {
                        break;
                    }
                    // The last interval extends to infinity.
                    let hi = if k + 1 == rates.len() { f64::INFINITY } else { cuts[k + 1] };
                    acc += rate * (t.min(hi) - lo);
                }
                acc
            })
            .collect()
    }

    /// Hazard draws; right-continuous at cut points.
    pub fn hazard(&self, grid: &Grid) -> Result<HazardDraws> {
        let cuts = self.partition.cutpoints();
        let rows = self
            .draws
            .iter()
            .map(|l| {
                grid.points()
                    .iter()
                    .map(|&t| {
                        let k = cuts.partition_point(|&c| c <= t).clamp(1, l.len()) - 1;
                        l[k].exp()
                    })
                    .collect()
            })
            .collect();
        HazardDraws::new(grid.clone(), rows)
    }
}

/// Survival draws S(t) = exp(-sum_k exp(l_k) |interval k within [0, t]|).
pub fn posterior_survival(post: &PiecewisePosterior, grid: &Grid) -> Result<CurveDraws> {
    let rows = post
        .draws
        .iter()
        .map(|l| {
            post.cumulative_hazard_row(l, grid)
                .into_iter()
                .map(|h| (-h).exp())
                .collect()
        })
        .collect();
    CurveDraws::new(grid.clone(), rows)
}
