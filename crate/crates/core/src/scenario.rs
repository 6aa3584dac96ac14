//! Scenario files: a JSON description of one blending analysis, the
//! runner that executes it and writes curve files plus a manifest, and
//! the comparison of results against a later data cut.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blend::{rmst, survival_at, BlendDiagnostics, BlendSpec, DrawSummary};
use crate::curves::CurveDraws;
use crate::dataset::SurvivalDataset;
use crate::distributions::Family;
use crate::elicitation::ElicitationSpec;
use crate::error::{Error, Result};
use crate::io::{load_dataset, CurveTable, TimeUnit};
use crate::km::kaplan_meier;
use crate::piecewise::{McmcDiagnostics, PiecewisePosterior};
use crate::pipeline::{
    blend_sets, build_external, fit_observed, BlendOutput, CurveSet, ExternalInput, ExternalModel,
    ObservedModelConfig,
};
use crate::special::Grid;

/// Environment variable that overrides the scenario seed.
pub const SEED_ENV: &str = "BLEND_SEED";

pub const OUTPUT_FILES: [&str; 7] = [
    "survival_observed.csv",
    "survival_external.csv",
    "survival_blended.csv",
    "hazard_observed.csv",
    "hazard_external.csv",
    "hazard_blended.csv",
    "manifest.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricCurve {
    pub family: Family,
    pub params: Vec<f64>,
}

/// Exactly one of `dataset`, `elicitation` or `parametric`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elicitation: Option<ElicitationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametric: Option<ParametricCurve>,
    /// Candidate families; empty means all five standard ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<Family>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendSettings {
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to the end of observed follow-up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub spacing: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { spacing: 1.0 }
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub observed: DataSource,
    #[serde(default)]
    pub observed_model: ObservedModelConfig,
    pub external: ExternalSource,
    pub blend: BlendSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub landmarks: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Parses the value of the seed override variable.
pub fn parse_seed_override(value: Option<&str>) -> Result<Option<u64>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Spec(format!("{SEED_ENV} must be a nonnegative integer, got '{v}'"))),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(format!("scenario: {e}")))
    }

    /// Reads a scenario file; relative data paths are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Spec(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.resolve_paths(base);
        Ok(s)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.observed.path);
        if let Some(d) = &mut self.external.dataset {
            fix(&mut d.path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ext = &self.external;
        let sources = [ext.dataset.is_some(), ext.elicitation.is_some(), ext.parametric.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Spec(
                "external source needs exactly one of dataset, elicitation, parametric".into(),
            ));
        }
        if let Some(spec) = &ext.elicitation {
            spec.validate()?;
        }
        self.observed_model.validate()?;
        let h = self.blend.horizon;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Spec(format!("horizon must be positive, got {h}")));
        }
        let spacing = self.grid.spacing;
        if !(spacing > 0.0 && spacing <= h) {
            return Err(Error::Spec(format!("grid spacing must lie in (0, {h}], got {spacing}")));
        }
        if let Some(t) = self.landmarks.iter().find(|t| !(0.0..=h).contains(*t)) {
            return Err(Error::Spec(format!("landmark {t} lies outside [0, {h}]")));
        }
        Ok(())
    }

    /// The blending specification once the end of follow-up is known.
    pub fn blend_spec(&self, follow_up_end: f64) -> Result<BlendSpec> {
        let s = &self.blend;
        let spec = BlendSpec {
            alpha: s.alpha,
            beta: s.beta,
            a: s.a.unwrap_or(follow_up_end.min(s.horizon)),
            b: s.b.unwrap_or(s.horizon),
            horizon: s.horizon,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRow {
    pub time: f64,
    pub observed: DrawSummary,
    pub external: DrawSummary,
    pub blended: DrawSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmstRow {
    pub upto: f64,
    pub observed: DrawSummary,
    pub external: DrawSummary,
    pub blended: DrawSummary,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub spec: BlendSpec,
    pub grid: Grid,
    pub observed_data: SurvivalDataset,
    pub posterior: PiecewisePosterior,
    pub external: ExternalModel,
    pub curves: BlendOutput,
    pub landmarks: Vec<LandmarkRow>,
    pub rmst: RmstRow,
}

fn landmark_rows(curves: &BlendOutput, times: &[f64]) -> Result<Vec<LandmarkRow>> {
    times
        .iter()
        .map(|&t| {
            Ok(LandmarkRow {
                time: t,
                observed: survival_at(&curves.observed.survival, t)?,
                external: survival_at(&curves.external.survival, t)?,
                blended: survival_at(&curves.blended.survival, t)?,
            })
        })
        .collect()
}

/// Runs a validated scenario in memory. `seed` replaces the scenario seed
/// when given.
pub fn run_scenario(scenario: &Scenario, unit: TimeUnit) -> Result<ScenarioResult> {
    let mut scenario = scenario.clone();
    scenario.validate()?;
    let seed = scenario.seed;
    scenario.observed_model.mcmc.seed = seed;
    let horizon = scenario.blend.horizon;

    let observed_data = load_dataset(&scenario.observed.path, scenario.observed.arm.as_deref(), unit)
        .map_err(|e| e.in_stage("loading observed data"))?;
    let posterior = fit_observed(&observed_data, &scenario.observed_model, horizon)
        .map_err(|e| e.in_stage("fitting observed model"))?;
    let spec = scenario
        .blend_spec(posterior.partition.follow_up_end())
        .map_err(|e| e.in_stage("blend specification"))?;
    let grid = Grid::new(horizon, scenario.grid.spacing)?;

    let ext_src = &scenario.external;
    let input = if let Some(d) = &ext_src.dataset {
        ExternalInput::Data(
            load_dataset(&d.path, d.arm.as_deref(), unit)
                .map_err(|e| e.in_stage("loading external data"))?,
        )
    } else if let Some(e) = &ext_src.elicitation {
        ExternalInput::Elicitation(e.clone())
    } else {
        let p = ext_src.parametric.as_ref().expect("validated external source");
        ExternalInput::Parametric {
            family: p.family,
            params: p.params.clone(),
        }
    };
    let n_draws = posterior.draws.len();
    let external = build_external(&input, &ext_src.families, n_draws, seed.wrapping_add(1))
        .map_err(|e| e.in_stage("building external curve"))?;

    let curves = (|| {
        let observed = CurveSet::from_posterior(&posterior, &grid)?;
        let ext_curves = CurveSet::from_distributions(&external.draws, &grid)?;
        blend_sets(&observed, &ext_curves, &spec, seed.wrapping_add(2))
    })()
    .map_err(|e| e.in_stage("blending"))?;
    if curves.diagnostics.non_monotone_risk {
        log::warn!(
            "external cumulative hazard falls below the observed one inside [a, b] in {} draws",
            curves.diagnostics.draws_at_risk
        );
    }

    let (landmarks, rmst_row) = (|| {
        let landmarks = landmark_rows(&curves, &scenario.landmarks)?;
        let rmst_row = RmstRow {
            upto: horizon,
            observed: rmst(&curves.observed.survival, horizon)?,
            external: rmst(&curves.external.survival, horizon)?,
            blended: rmst(&curves.blended.survival, horizon)?,
        };
        Ok::<_, Error>((landmarks, rmst_row))
    })()
    .map_err(|e| e.in_stage("summaries"))?;

    Ok(ScenarioResult {
        scenario,
        spec,
        grid,
        observed_data,
        posterior,
        external,
        curves,
        landmarks,
        rmst: rmst_row,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSummary {
    pub family: Option<Family>,
    pub params: Option<Vec<f64>>,
    pub param_names: Vec<String>,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub converged: Option<bool>,
    pub n_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSummary {
    pub arm: String,
    pub n_obs: usize,
    pub n_events: usize,
    pub cutpoints: Vec<f64>,
    pub n_fitted: usize,
    pub equal_width_fallback: bool,
    pub n_draws: usize,
    pub mcmc: McmcDiagnostics,
}

/// Everything written next to the curve files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub seed: u64,
    pub time_unit: String,
    pub blend: BlendSpec,
    pub grid_spacing: f64,
    pub grid_points: usize,
    pub observed: ObservedSummary,
    pub external: ExternalSummary,
    pub diagnostics: BlendDiagnostics,
    pub landmarks: Vec<LandmarkRow>,
    pub rmst: RmstRow,
    pub files: Vec<String>,
}

impl ScenarioResult {
    pub fn survival_table(&self, which: Curve) -> CurveTable {
        let set = self.set(which);
        CurveTable::new(&self.grid, set.survival.summary())
    }

    pub fn hazard_table(&self, which: Curve) -> CurveTable {
        let set = self.set(which);
        CurveTable::new(&self.grid, set.hazard.summary())
    }

    fn set(&self, which: Curve) -> &CurveSet {
        match which {
            Curve::Observed => &self.curves.observed,
            Curve::External => &self.curves.external,
            Curve::Blended => &self.curves.blended,
        }
    }

    pub fn manifest(&self, unit: TimeUnit) -> Manifest {
        let fit = self.external.fit.as_ref();
        let family = fit.map(|f| f.family).or_else(|| {
            self.scenario.external.parametric.as_ref().map(|p| p.family)
        });
        let post = &self.posterior;
        Manifest {
            scenario: self.scenario.clone(),
            seed: self.scenario.seed,
            time_unit: match unit {
                TimeUnit::Months => "months".into(),
                TimeUnit::Years => "years".into(),
            },
            blend: self.spec,
            grid_spacing: self.grid.spacing(),
            grid_points: self.grid.len(),
            observed: ObservedSummary {
                arm: self.observed_data.arm().to_string(),
                n_obs: self.observed_data.len(),
                n_events: self.observed_data.n_events(),
                cutpoints: post.partition.cutpoints().to_vec(),
                n_fitted: post.partition.n_fitted(),
                equal_width_fallback: post.partition.equal_width_fallback,
                n_draws: post.draws.len(),
                mcmc: post.diagnostics.clone(),
            },
            external: ExternalSummary {
                family,
                params: fit
                    .map(|f| f.params.values.clone())
                    .or_else(|| self.scenario.external.parametric.as_ref().map(|p| p.params.clone())),
                param_names: family
                    .map(|f| f.param_names().iter().map(|s| s.to_string()).collect())
                    .unwrap_or_default(),
                loglik: fit.map(|f| f.loglik),
                aic: fit.map(|f| f.aic),
                converged: fit.map(|f| f.converged),
                n_draws: self.external.draws.len(),
                segment_counts: self.external.synthetic.as_ref().map(|s| s.segment_counts.clone()),
                warnings: self
                    .external
                    .synthetic
                    .as_ref()
                    .map(|s| s.warnings.clone())
                    .unwrap_or_default(),
            },
            diagnostics: self.curves.diagnostics.clone(),
            landmarks: self.landmarks.clone(),
            rmst: self.rmst.clone(),
            files: OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Writes the six curve files and the manifest into `dir`. On failure
    /// any files already written are removed.
    pub fn write(&self, dir: &Path, unit: TimeUnit) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let result = self.write_inner(dir, unit, &mut written);
        if result.is_err() {
            for p in &written {
                let _ = fs::remove_file(p);
            }
        }
        result.map(|_| written).map_err(|e| e.in_stage("writing outputs"))
    }

    fn write_inner(&self, dir: &Path, unit: TimeUnit, written: &mut Vec<PathBuf>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let curves = [Curve::Observed, Curve::External, Curve::Blended];
        let mut tables = Vec::new();
        for c in curves {
            tables.push(self.survival_table(c));
        }
        for c in curves {
            tables.push(self.hazard_table(c));
        }
        for (name, table) in OUTPUT_FILES.iter().zip(&tables) {
            let path = dir.join(name);
            written.push(path.clone());
            table.write(&path, unit)?;
        }
        let path = dir.join(OUTPUT_FILES[6]);
        written.push(path.clone());
        let mut json = serde_json::to_string_pretty(&self.manifest(unit))?;
        json.push('\n');
        fs::write(&path, json)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Observed,
    External,
    Blended,
}

/// Loads, runs and writes a scenario file.
pub fn run_scenario_file(
    path: &Path,
    out_dir: &Path,
    unit: TimeUnit,
    seed_override: Option<u64>,
) -> Result<ScenarioResult> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed_override {
        scenario.seed = seed;
    }
    let result = run_scenario(&scenario, unit)?;
    result.write(out_dir, unit)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub time: f64,
    pub later_km: f64,
    pub blended: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Largest |median - KM| over grid points covered by the later data.
    pub max_abs_blended: f64,
    pub max_abs_observed: f64,
    pub landmarks: Vec<ValidationRow>,
    pub mean_landmark_error_blended: f64,
    pub mean_landmark_error_observed: f64,
    pub last_common_time: f64,
    /// Observed-only median over the later KM at `last_common_time`.
    pub observed_to_km_ratio: f64,
}

fn table_at(table: &CurveTable, t: f64) -> Result<f64> {
    let grid = Grid::from_points(table.time.clone())?;
    let curve = CurveDraws::new(grid, vec![table.median.clone()])?;
    Ok(survival_at(&curve, t)?.median)
}

/// Compares blended and observed-only medians with the Kaplan-Meier
/// estimate of a later, longer data cut.
pub fn compare_to_followup(
    blended: &CurveTable,
    observed: &CurveTable,
    later: &SurvivalDataset,
    landmarks: &[f64],
) -> Result<ValidationReport> {
    if blended.time != observed.time {
        return Err(Error::Usage("blended and observed curves use different grids".into()));
    }
    let km = kaplan_meier(later);
    let mut max_b: f64 = 0.0;
    let mut max_o: f64 = 0.0;
    let mut last = None;
    for (i, &t) in blended.time.iter().enumerate() {
        if t > km.last_time {
            break;
        }
        let s = km.survival_at(t);
        max_b = max_b.max((blended.median[i] - s).abs());
        max_o = max_o.max((observed.median[i] - s).abs());
        last = Some(i);
    }
    let last = last.ok_or_else(|| Error::Data("later data end before the first grid point".into()))?;
    let last_time = blended.time[last];
    let rows = landmarks
        .iter()
        .filter(|&&t| t <= km.last_time && t <= *blended.time.last().expect("nonempty"))
        .map(|&t| {
            Ok(ValidationRow {
                time: t,
                later_km: km.survival_at(t),
                blended: table_at(blended, t)?,
                observed: table_at(observed, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: &dyn Fn(&ValidationRow) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| (f(r) - r.later_km).abs()).sum::<f64>() / rows.len() as f64
        }
    };
    Ok(ValidationReport {
        max_abs_blended: max_b,
        max_abs_observed: max_o,
        mean_landmark_error_blended: mean(&|r| r.blended),
        mean_landmark_error_observed: mean(&|r| r.observed),
        landmarks: rows,
        last_common_time: last_time,
        observed_to_km_ratio: observed.median[last] / km.survival_at(last_time),
    })
}

/// Reads the blended and observed curve files and landmark times from a
/// scenario output directory, and compares them with later data.
pub fn validate_outputs(dir: &Path, later: &SurvivalDataset, unit: TimeUnit) -> Result<ValidationReport> {
    let blended = CurveTable::read(&dir.join("survival_blended.csv"), unit)?;
    let observed = CurveTable::read(&dir.join("survival_observed.csv"), unit)?;
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    compare_to_followup(&blended, &observed, later, &manifest.scenario.landmarks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "observed": {"path": "obs.csv"},
            "external": {"elicitation": {"constraints": [{"time_months": 120, "survival": 0.2}], "t_max_months": 240, "n": 100}},
            "blend": {"alpha": 1, "beta": 1, "horizon": 180}
        }"#
    }

    #[test]
    fn defaults_and_paths() {
        let mut s = Scenario::from_json(minimal()).unwrap();
        assert_eq!(s.seed, 1);
        assert_eq!(s.grid.spacing, 1.0);
        assert_eq!(s.observed_model.intervals, 8);
        s.resolve_paths(Path::new("/data"));
        assert_eq!(s.observed.path, PathBuf::from("/data/obs.csv"));
        assert!(s.validate().is_ok());
        let spec = s.blend_spec(48.0).unwrap();
        assert_eq!((spec.a, spec.b), (48.0, 180.0));
    }

    #[test]
    fn external_source_must_be_unique() {
        let mut s = Scenario::from_json(minimal()).unwrap();
        s.external.parametric = Some(ParametricCurve {
            family: Family::Exponential,
            params: vec![0.1],
        });
        assert!(s.validate().is_err());
        s.external = ExternalSource::default();
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_landmarks() {
        let text = minimal().replace("\"horizon\": 180", "\"horizon\": 180, \"c\": 1");
        assert!(Scenario::from_json(&text).is_err());
        let mut s = Scenario::from_json(minimal()).unwrap();
        s.landmarks = vec![200.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn seed_override_parsing() {
        assert_eq!(parse_seed_override(None).unwrap(), None);
        assert_eq!(parse_seed_override(Some(" 42 ")).unwrap(), Some(42));
        assert!(parse_seed_override(Some("x")).is_err());
    }

    #[test]
    fn followup_matching_curve_has_zero_error() {
        let later = SurvivalDataset::from_columns(
            &[2.0, 3.0, 5.0, 7.0, 8.0, 11.0],
            &[true, false, true, true, false, true],
        )
        .unwrap();
        let km = kaplan_meier(&later);
        let time: Vec<f64> = (0..=11).map(f64::from).collect();
        let median: Vec<f64> = time.iter().map(|&t| km.survival_at(t)).collect();
        let table = CurveTable {
            time: time.clone(),
            median: median.clone(),
            lo95: median.clone(),
            hi95: median,
        };
        let report = compare_to_followup(&table, &table, &later, &[5.0, 8.0]).unwrap();
        assert_eq!(report.max_abs_blended, 0.0);
        assert_eq!(report.mean_landmark_error_blended, 0.0);
        assert_eq!(report.landmarks.len(), 2);
        assert_eq!(report.last_common_time, 11.0);
        assert!(report.observed_to_km_ratio.is_nan() || report.observed_to_km_ratio == 1.0);
    }

    #[test]
    fn followup_ratio() {
        let later = SurvivalDataset::from_columns(&[1.0, 2.0, 4.0, 4.0], &[true, false, false, false]).unwrap();
        let time = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let flat = |v: f64| CurveTable {
            time: time.clone(),
            median: vec![v; 6],
            lo95: vec![v; 6],
            hi95: vec![v; 6],
        };
        let report = compare_to_followup(&flat(0.75), &flat(1.0), &later, &[]).unwrap();
        assert_eq!(report.last_common_time, 4.0);
        assert!((report.observed_to_km_ratio - 1.0 / 0.75).abs() < 1e-15);
        assert_eq!(report.max_abs_blended, 0.25);
        assert!(report.max_abs_observed > 0.24);
    }
}
