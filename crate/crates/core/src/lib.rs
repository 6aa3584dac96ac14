//! Blended survival curves for extrapolating heavily censored
//! time-to-event data.
//!
//! A flexible model fitted to the observed data and an external long-term
//! curve are combined as `S_ble = S_obs^(1 - w) * S_ext^w`, where the
//! weight `w(t)` is a Beta CDF on a rescaled blending interval `[a, b]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blend;
pub mod curves;
pub mod dataset;
pub mod distributions;
pub mod elicitation;
pub mod error;
pub mod fit;
pub mod io;
pub mod km;
pub mod optim;
pub mod piecewise;
pub mod pipeline;
pub mod scenario;
pub mod service;
pub mod simulate;
pub mod special;

pub use dataset::{Record, SurvivalDataset};
pub use distributions::{Distribution, Family, ParamVector};
pub use error::{Error, Result};
pub use fit::{fit_mle, log_likelihood, parametric_draws, rank_models, FittedModel};
pub use km::{kaplan_meier, km_survival_at, StepCurve};
pub use special::Grid;
