//! HTTP/JSON facade for interactive elicitation.
//!
//! Uploading a dataset opens a session. Fitting the observed model is the
//! only expensive step, so posteriors are cached per session and per
//! distinct model configuration. Blend previews read the cache and never
//! modify it.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blend::{weight_table, BlendDiagnostics, BlendSpec};
use crate::curves::CurveSummary;
use crate::dataset::SurvivalDataset;
use crate::distributions::Family;
use crate::elicitation::ElicitationSpec;
use crate::error::Error;
use crate::io::{parse_datasets, select_arm, CurveTable, TimeUnit};
use crate::piecewise::{McmcConfig, McmcDiagnostics, PiecewisePosterior, Precision};
use crate::pipeline::{blend_sets, build_external, fit_observed, CurveSet, ExternalInput, ObservedModelConfig};
use crate::scenario::{LandmarkRow, ParametricCurve};
use crate::special::Grid;

/// Upper limits that keep requests interactive.
const MAX_GRID_POINTS: usize = 2001;
const MAX_SYNTHETIC: usize = 100_000;

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Data(_) => StatusCode::BAD_REQUEST,
            Error::Numerical(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::Stage { source, .. } if source.is_numerical() => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

struct CachedFit {
    config: FitRequest,
    posterior: PiecewisePosterior,
}

struct Session {
    dataset: SurvivalDataset,
    fingerprint: String,
    created: Instant,
    last_used: Instant,
    fits: HashMap<String, Arc<CachedFit>>,
    latest: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Session>>>,
    idle_ttl: Duration,
}

impl AppState {
    pub fn new(idle_ttl: Duration) -> Self {
        AppState {
            sessions: Arc::default(),
            idle_ttl,
        }
    }

    fn purge_expired(&self) {
        let now = Instant::now();
        let mut sessions = self.sessions.write().expect("session lock");
        sessions.retain(|id, s| {
            let keep = now.duration_since(s.last_used) <= self.idle_ttl;
            if !keep {
                log::debug!("expiring session {id}, opened {:?} ago", s.created.elapsed());
            }
            keep
        });
    }

    fn touch(&self, id: &str) -> Result<(), ApiError> {
        self.purge_expired();
        let mut sessions = self.sessions.write().expect("session lock");
        let s = sessions
            .get_mut(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session '{id}'")))?;
        s.last_used = Instant::now();
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session lock").len()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", post(create_dataset))
        .route("/sessions/{id}/fit-observed", post(fit_observed_handler))
        .route("/sessions/{id}/preview-blend", post(preview_blend))
        .route("/weight", get(weight_handler))
        .with_state(state)
}

/// Serves until the process is stopped, purging idle sessions once a
/// minute.
pub async fn serve(addr: SocketAddr, idle_ttl: Duration) -> std::io::Result<()> {
    let state = AppState::new(idle_ttl);
    let janitor = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            janitor.purge_expired();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn fingerprint(data: &SurvivalDataset) -> String {
    let mut h = DefaultHasher::new();
    for r in data.records() {
        r.time.to_bits().hash(&mut h);
        r.event.hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

#[derive(Debug, Deserialize)]
pub struct DatasetQuery {
    pub arm: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetResponse {
    pub session_id: String,
    pub fingerprint: String,
    pub arm: String,
    pub n_obs: usize,
    pub n_events: usize,
    pub max_time: f64,
}

async fn create_dataset(
    State(state): State<AppState>,
    Query(query): Query<DatasetQuery>,
    body: Bytes,
) -> ApiResult<DatasetResponse> {
    state.purge_expired();
    let datasets = parse_datasets(&body[..], TimeUnit::Months)?;
    let dataset = select_arm(datasets, query.arm.as_deref())?;
    let id = uuid::Uuid::new_v4().to_string();
    let response = DatasetResponse {
        session_id: id.clone(),
        fingerprint: fingerprint(&dataset),
        arm: dataset.arm().to_string(),
        n_obs: dataset.len(),
        n_events: dataset.n_events(),
        max_time: dataset.max_time(),
    };
    let now = Instant::now();
    state.sessions.write().expect("session lock").insert(
        id,
        Session {
            fingerprint: response.fingerprint.clone(),
            dataset,
            created: now,
            last_used: now,
            fits: HashMap::new(),
            latest: None,
        },
    );
    Ok(Json(response))
}

fn default_horizon() -> f64 {
    180.0
}

fn default_spacing() -> f64 {
    1.0
}

/// Observed-model configuration plus the horizon the extrapolation
/// intervals must reach and the output grid spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default = "default_rw_order")]
    pub rw_order: u8,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_spacing")]
    pub grid_spacing: f64,
}

fn default_intervals() -> usize {
    ObservedModelConfig::default().intervals
}

fn default_rw_order() -> u8 {
    ObservedModelConfig::default().rw_order
}

impl FitRequest {
    pub fn model(&self) -> ObservedModelConfig {
        ObservedModelConfig {
            intervals: self.intervals,
            rw_order: self.rw_order,
            precision: self.precision,
            mcmc: self.mcmc,
        }
    }
}

fn check_grid(horizon: f64, spacing: f64) -> Result<Grid, ApiError> {
    if !(horizon > 0.0 && spacing > 0.0) || horizon / spacing > (MAX_GRID_POINTS - 1) as f64 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("grid must have positive spacing and at most {MAX_GRID_POINTS} points"),
        ));
    }
    Ok(Grid::new(horizon, spacing)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitResponse {
    pub fit_id: String,
    pub fingerprint: String,
    pub cached: bool,
    pub cutpoints: Vec<f64>,
    pub n_fitted: usize,
    pub n_draws: usize,
    pub survival: CurveTable,
    pub hazard: CurveTable,
    pub diagnostics: McmcDiagnostics,
}

async fn fit_observed_handler(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<FitResponse> {
    let request: FitRequest = parse_body(&body)?;
    request.model().validate()?;
    let grid = check_grid(request.horizon, request.grid_spacing)?;
    state.touch(&id)?;
    let key = serde_json::to_string(&request).expect("serializable request");

    let (dataset, fingerprint, cached) = {
        let sessions = state.sessions.read().expect("session lock");
        let s = sessions.get(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session expired"))?;
        (s.dataset.clone(), s.fingerprint.clone(), s.fits.get(&key).cloned())
    };
    let was_cached = cached.is_some();
    let fit = match cached {
        Some(fit) => fit,
        None => {
            let req = request.clone();
            let posterior = tokio::task::spawn_blocking(move || fit_observed(&dataset, &req.model(), req.horizon))
                .await
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
            Arc::new(CachedFit {
                config: request,
                posterior,
            })
        }
    };
    {
        let mut sessions = state.sessions.write().expect("session lock");
        let s = sessions.get_mut(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session expired"))?;
        s.fits.entry(key.clone()).or_insert_with(|| fit.clone());
        s.latest = Some(key.clone());
    }
    let curves = CurveSet::from_posterior(&fit.posterior, &grid)?;
    Ok(Json(FitResponse {
        fit_id: fit_id(&key),
        fingerprint,
        cached: was_cached,
        cutpoints: fit.posterior.partition.cutpoints().to_vec(),
        n_fitted: fit.posterior.partition.n_fitted(),
        n_draws: fit.posterior.draws.len(),
        survival: CurveTable::new(&grid, curves.survival.summary()),
        hazard: CurveTable::new(&grid, curves.hazard.summary()),
        diagnostics: fit.posterior.diagnostics.clone(),
    }))
}

fn fit_id(key: &str) -> String {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    format!("{:016x}", h.finish())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewBlendSettings {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    /// Which cached fit to blend against; the most recent one if absent.
    #[serde(default)]
    pub fit_id: Option<String>,
    #[serde(default)]
    pub elicitation: Option<ElicitationSpec>,
    #[serde(default)]
    pub parametric: Option<ParametricCurve>,
    #[serde(default)]
    pub families: Vec<Family>,
    pub blend: PreviewBlendSettings,
    #[serde(default)]
    pub landmarks: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurveTriple {
    pub observed: CurveTable,
    pub external: CurveTable,
    pub blended: CurveTable,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalReport {
    pub family: Family,
    pub params: Vec<f64>,
    pub aic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Kaplan-Meier estimate of the synthetic data, for overlay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_km: Option<StepTable>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepTable {
    pub t: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightTable {
    pub t: Vec<f64>,
    pub pi: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub fit_id: String,
    pub blend: BlendSpec,
    pub survival: CurveTriple,
    pub hazard: CurveTriple,
    pub weight: WeightTable,
    pub landmarks: Vec<LandmarkRow>,
    pub external: ExternalReport,
    pub diagnostics: BlendDiagnostics,
}

async fn preview_blend(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<PreviewResponse> {
    let request: PreviewRequest = parse_body(&body)?;
    state.touch(&id)?;
    let fit = {
        let sessions = state.sessions.read().expect("session lock");
        let s = sessions.get(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session expired"))?;
        let key = match &request.fit_id {
            Some(fid) => s.fits.keys().find(|k| fit_id(k) == *fid).cloned(),
            None => s.latest.clone(),
        };
        key.and_then(|k| s.fits.get(&k).cloned())
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no observed-model fit cached for this session"))?
    };
    let response = tokio::task::spawn_blocking(move || compute_preview(&fit, &request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(response))
}

fn summary_table(grid: &Grid, s: &CurveSummary) -> CurveTable {
    CurveTable::new(grid, s)
}

fn compute_preview(fit: &CachedFit, request: &PreviewRequest) -> Result<PreviewResponse, ApiError> {
    let unprocessable = |m: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m.to_string());
    let horizon = fit.config.horizon;
    let settings = request.blend;
    let spec = BlendSpec {
        alpha: settings.alpha,
        beta: settings.beta,
        a: settings.a.unwrap_or(fit.posterior.partition.follow_up_end().min(horizon)),
        b: settings.b.unwrap_or(horizon),
        horizon,
    };
    spec.validate()?;
    if request.landmarks.iter().any(|t| !(0.0..=horizon).contains(t)) {
        return Err(unprocessable("landmarks must lie within the horizon"));
    }
    let input = match (&request.elicitation, &request.parametric) {
        (Some(e), None) => {
            if e.n_synthetic > MAX_SYNTHETIC {
                return Err(unprocessable("synthetic sample size too large"));
            }
            ExternalInput::Elicitation(e.clone())
        }
        (None, Some(p)) => ExternalInput::Parametric {
            family: p.family,
            params: p.params.clone(),
        },
        _ => return Err(unprocessable("give exactly one of elicitation or parametric")),
    };
    let grid = Grid::new(horizon, fit.config.grid_spacing)?;
    let n_draws = fit.posterior.draws.len();
    let external = build_external(&input, &request.families, n_draws, request.seed.wrapping_add(1))?;
    let observed = CurveSet::from_posterior(&fit.posterior, &grid)?;
    let ext_curves = CurveSet::from_distributions(&external.draws, &grid)?;
    let out = blend_sets(&observed, &ext_curves, &spec, request.seed.wrapping_add(2))?;
    let landmarks = request
        .landmarks
        .iter()
        .map(|&t| {
            Ok(LandmarkRow {
                time: t,
                observed: crate::blend::survival_at(&out.observed.survival, t)?,
                external: crate::blend::survival_at(&out.external.survival, t)?,
                blended: crate::blend::survival_at(&out.blended.survival, t)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let (pi, density) = weight_table(&grid, &spec)?;
    let triple = |f: fn(&CurveSet) -> &CurveSummary| CurveTriple {
        observed: summary_table(&grid, f(&out.observed)),
        external: summary_table(&grid, f(&out.external)),
        blended: summary_table(&grid, f(&out.blended)),
    };
    let (family, params, aic) = match (&external.fit, &request.parametric) {
        (Some(f), _) => (f.family, f.params.values.clone(), Some(f.aic)),
        (None, Some(p)) => (p.family, p.params.clone(), None),
        (None, None) => unreachable!("external input is one of the two"),
    };
    Ok(PreviewResponse {
        fit_id: fit_id(&serde_json::to_string(&fit.config).expect("serializable request")),
        blend: spec,
        survival: triple(|c| c.survival.summary()),
        hazard: triple(|c| c.hazard.summary()),
        weight: WeightTable {
            t: grid.points().to_vec(),
            pi,
            density,
        },
        landmarks,
        external: ExternalReport {
            family,
            params,
            aic,
            segment_counts: external.synthetic.as_ref().map(|s| s.segment_counts.clone()),
            warnings: external.synthetic.as_ref().map(|s| s.warnings.clone()).unwrap_or_default(),
            synthetic_km: external.synthetic.as_ref().map(|s| {
                let km = crate::km::kaplan_meier(&s.dataset);
                StepTable {
                    t: km.times,
                    survival: km.survival,
                }
            }),
        },
        diagnostics: out.diagnostics,
    })
}

#[derive(Debug, Deserialize)]
pub struct WeightQuery {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    /// Number of evenly spaced points on [0, horizon].
    #[serde(default)]
    pub grid: Option<usize>,
    /// Defaults to `b`.
    #[serde(default)]
    pub horizon: Option<f64>,
}

async fn weight_handler(query: Result<Query<WeightQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<WeightTable> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let horizon = q.horizon.unwrap_or(q.b);
    let spec = BlendSpec {
        alpha: q.alpha,
        beta: q.beta,
        a: q.a,
        b: q.b,
        horizon,
    };
    spec.validate()?;
    let n = q.grid.unwrap_or(101);
    if !(2..=MAX_GRID_POINTS * 5).contains(&n) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "grid must have between 2 and 10005 points"));
    }
    let points: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
    let grid = Grid::from_points(points)?;
    let (pi, density) = weight_table(&grid, &spec)?;
    Ok(Json(WeightTable {
        t: grid.points().to_vec(),
        pi,
        density,
    }))
}
