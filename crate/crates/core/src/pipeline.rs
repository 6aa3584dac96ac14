//! The end-to-end engine shared by the scenario runner, the HTTP service
//! and the C interface: observed posterior, external draws, blending.

use serde::{Deserialize, Serialize};

use crate::blend::{
    blend_diagnostics, blend_hazard, blend_survival, pairing_indices, BlendDiagnostics, BlendSpec,
};
use crate::curves::{CurveDraws, HazardDraws};
use crate::dataset::SurvivalDataset;
use crate::distributions::{Distribution, Family, ParamVector};
use crate::elicitation::{fit_external, synthesize_dataset, ElicitationSpec, SyntheticDataset};
use crate::error::{Error, Result};
use crate::fit::{parametric_draws, FittedModel};
use crate::piecewise::{
    fit_mcmc, make_partition, posterior_survival, McmcConfig, PiecewisePosterior, Precision,
    RwPrior,
};
use crate::special::Grid;

/// Settings of the piecewise-exponential model for the observed arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservedModelConfig {
    pub intervals: usize,
    pub rw_order: u8,
    pub precision: Precision,
    pub mcmc: McmcConfig,
}

impl Default for ObservedModelConfig {
    fn default() -> Self {
        ObservedModelConfig {
            intervals: 8,
            rw_order: 1,
            precision: Precision::default(),
            mcmc: McmcConfig::default(),
        }
    }
}

impl ObservedModelConfig {
    pub fn prior(&self) -> RwPrior {
        RwPrior {
            order: self.rw_order,
            precision: self.precision,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::Spec("need at least one interval".into()));
        }
        if self.mcmc.n_draws == 0 || self.mcmc.chains == 0 {
            return Err(Error::Spec("MCMC needs at least one chain and one draw".into()));
        }
        self.prior().validate()
    }
}

/// Fits the observed arm with extrapolation intervals up to `horizon`.
pub fn fit_observed(
    data: &SurvivalDataset,
    config: &ObservedModelConfig,
    horizon: f64,
) -> Result<PiecewisePosterior> {
    config.validate()?;
    let partition = make_partition(data, config.intervals, horizon)?;
    fit_mcmc(data, &partition, &config.prior(), &config.mcmc)
}

/// Survival, hazard and cumulative-hazard draws on one grid.
#[derive(Debug, Clone)]
pub struct CurveSet {
    pub survival: CurveDraws,
    pub hazard: HazardDraws,
    pub cumulative: Vec<Vec<f64>>,
}

impl CurveSet {
    pub fn from_posterior(post: &PiecewisePosterior, grid: &Grid) -> Result<Self> {
        Ok(CurveSet {
            survival: posterior_survival(post, grid)?,
            hazard: post.hazard(grid)?,
            cumulative: post.cumulative_hazard(grid),
        })
    }

    pub fn from_distributions(dists: &[Distribution], grid: &Grid) -> Result<Self> {
        let cumulative = dists
            .iter()
            .map(|d| grid.points().iter().map(|&t| d.cumulative_hazard(t)).collect())
            .collect();
        Ok(CurveSet {
            survival: CurveDraws::from_distributions(grid, dists)?,
            hazard: HazardDraws::from_distributions(grid, dists)?,
            cumulative,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.survival.n_draws()
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let pick = |m: &[Vec<f64>]| rows.iter().map(|&i| m[i].clone()).collect::<Vec<_>>();
        Ok(CurveSet {
            survival: CurveDraws::new(self.survival.grid().clone(), pick(self.survival.draws()))?,
            hazard: HazardDraws::new(self.hazard.grid().clone(), pick(self.hazard.draws()))?,
            cumulative: pick(&self.cumulative),
        })
    }
}

/// Where the external curve comes from, once any file has been read.
#[derive(Debug, Clone)]
pub enum ExternalInput {
    /// Hard long-term data, fitted by maximum likelihood.
    Data(SurvivalDataset),
    /// Expert statements turned into synthetic data, then fitted.
    Elicitation(ElicitationSpec),
    /// A fixed parametric curve without parameter uncertainty.
    Parametric { family: Family, params: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ExternalModel {
    pub fit: Option<FittedModel>,
    pub synthetic: Option<SyntheticDataset>,
    pub draws: Vec<Distribution>,
}

/// Builds `n_draws` external curves (one for a fixed parametric input).
pub fn build_external(
    input: &ExternalInput,
    families: &[Family],
    n_draws: usize,
    seed: u64,
) -> Result<ExternalModel> {
    let from_fit = |data: &SurvivalDataset| -> Result<(FittedModel, Vec<Distribution>)> {
        let fit = fit_external(data, families)?.best;
        let draws = parametric_draws(&fit, n_draws, seed)?
            .iter()
            .map(|p| Distribution::new(fit.family, p))
            .collect::<Result<Vec<_>>>()?;
        Ok((fit, draws))
    };
    match input {
        ExternalInput::Data(data) => {
            let (fit, draws) = from_fit(data)?;
            Ok(ExternalModel {
                fit: Some(fit),
                synthetic: None,
                draws,
            })
        }
        ExternalInput::Elicitation(spec) => {
            let synthetic = synthesize_dataset(spec)?;
            let (fit, draws) = from_fit(&synthetic.dataset)?;
            Ok(ExternalModel {
                fit: Some(fit),
                synthetic: Some(synthetic),
                draws,
            })
        }
        ExternalInput::Parametric { family, params } => {
            let dist = Distribution::new(*family, &ParamVector::new(*family, params.clone()))?;
            Ok(ExternalModel {
                fit: None,
                synthetic: None,
                draws: vec![dist],
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlendOutput {
    pub observed: CurveSet,
    pub external: CurveSet,
    pub blended: CurveSet,
    pub diagnostics: BlendDiagnostics,
}

/// Pairs the draws of both sources and blends them.
pub fn blend_sets(
    observed: &CurveSet,
    external: &CurveSet,
    spec: &BlendSpec,
    seed: u64,
) -> Result<BlendOutput> {
    let (n_obs, n_ext) = (observed.n_draws(), external.n_draws());
    let (observed, external) = if n_obs == n_ext || n_ext == 1 {
        (observed.clone(), external.clone())
    } else {
        let (io, ie) = pairing_indices(n_obs, n_ext, seed);
        (observed.select(&io)?, external.select(&ie)?)
    };
    let survival = blend_survival(&observed.survival, &external.survival, spec)?;
    let hazard = blend_hazard(
        &observed.hazard,
        &external.hazard,
        &observed.cumulative,
        &external.cumulative,
        spec,
    )?;
    let diagnostics = blend_diagnostics(
        &observed.cumulative,
        &external.cumulative,
        survival.grid(),
        spec,
        &survival,
        &hazard,
    );
    let cumulative = survival.cumulative_hazard();
    Ok(BlendOutput {
        observed,
        external,
        blended: CurveSet {
            survival,
            hazard,
            cumulative,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parametric_external_broadcasts() {
        let grid = Grid::new(24.0, 1.0).unwrap();
        let obs = CurveSet::from_distributions(
            &[
                Distribution::Exponential { rate: 0.01 },
                Distribution::Exponential { rate: 0.02 },
            ],
            &grid,
        )
        .unwrap();
        let ext = build_external(
            &ExternalInput::Parametric {
                family: Family::Exponential,
                params: vec![0.05],
            },
            &[],
            2,
            1,
        )
        .unwrap();
        assert_eq!(ext.draws.len(), 1);
        let ext = CurveSet::from_distributions(&ext.draws, &grid).unwrap();
        let spec = BlendSpec {
            alpha: 1.0,
            beta: 1.0,
            a: 6.0,
            b: 18.0,
            horizon: 24.0,
        };
        let out = blend_sets(&obs, &ext, &spec, 3).unwrap();
        assert_eq!(out.blended.n_draws(), 2);
        assert!(!out.diagnostics.non_monotone_risk);
        assert_eq!(out.blended.survival.draws()[1][24], ext.survival.draws()[0][24]);
    }

    #[test]
    fn unequal_counts_are_resampled() {
        let grid = Grid::new(12.0, 1.0).unwrap();
        let rates = |k: usize| {
            (0..k)
                .map(|i| Distribution::Exponential { rate: 0.01 + 0.001 * i as f64 })
                .collect::<Vec<_>>()
        };
        let obs = CurveSet::from_distributions(&rates(5), &grid).unwrap();
        let ext = CurveSet::from_distributions(&rates(3), &grid).unwrap();
        let spec = BlendSpec {
            alpha: 2.0,
            beta: 2.0,
            a: 2.0,
            b: 10.0,
            horizon: 12.0,
        };
        let out = blend_sets(&obs, &ext, &spec, 3).unwrap();
        assert_eq!(out.blended.n_draws(), 5);
        assert_eq!(out.observed.survival.draws(), obs.survival.draws());
    }

    #[test]
    fn config_validation() {
        let mut c = ObservedModelConfig::default();
        assert!(c.validate().is_ok());
        c.rw_order = 3;
        assert!(c.validate().is_err());
        let json = r#"{"intervals": 4, "mcmc": {"n_draws": 100}}"#;
        let c: ObservedModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!((c.intervals, c.mcmc.n_draws, c.mcmc.burn_in), (4, 100, 2000));
        assert!(serde_json::from_str::<ObservedModelConfig>(r#"{"k": 3}"#).is_err());
    }
}
