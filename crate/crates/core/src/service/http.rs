//! JSON HTTP API.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backtest::{retrain_due, rolling_backtest, run_backtest};
use crate::error::Error;
use crate::explain::{explain_artifact, Explanation, LimeConfig};
use crate::models::{EnsembleParams, ModelArtifact, TrainConfig};
use crate::pipeline::{train_pair, ArtifactPair, PipelineConfig};
use crate::simulate::{best_case_search, forecast, RankedScenario, ScenarioSpec, SearchSpace};

use super::config::RunConfig;
use super::store::{check_region_id, RegionStore};
use super::ingest_upload;

pub struct AppState {
    pub store: Arc<RegionStore>,
    pub config: RunConfig,
}

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::UnknownRegion(_) | Error::NotTrained(_) => StatusCode::NOT_FOUND,
        Error::TrainingInProgress(_) => StatusCode::CONFLICT,
        Error::TooShortSeries { .. } | Error::InsufficientHistory { .. } | Error::ZeroVariance => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::UnknownRegion(_) => "unknown_region",
        Error::NotTrained(_) => "not_trained",
        Error::TrainingInProgress(_) => "training_in_progress",
        Error::TooShortSeries { .. } => "too_short_series",
        Error::InsufficientHistory { .. } => "insufficient_history",
        Error::ZeroVariance => "zero_variance",
        Error::InvalidScenario(_) => "invalid_scenario",
        Error::Parse(_) => "parse_error",
        Error::Io(_) => "io_error",
        _ => "bad_request",
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": error_kind(&self.0),
            "message": self.0.to_string(),
        });
        (status_for(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(Error::Parse(format!("request body: {e}"))))
}

/// Deep-merges a JSON patch onto a serialisable value.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&Value>) -> Result<T, Error> {
    fn merge(into: &mut Value, patch: &Value) {
        match (into, patch) {
            (Value::Object(a), Value::Object(b)) => {
                for (k, v) in b {
                    merge(a.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
            (slot, v) => *slot = v.clone(),
        }
    }
    let mut value = serde_json::to_value(base).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(p) = patch {
        merge(&mut value, p);
    }
    serde_json::from_value(value).map_err(|e| Error::Parse(format!("overrides: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> crate::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/regions/{id}/data", put(put_data))
        .route("/regions/{id}/train", post(train))
        .route("/regions/{id}/backtest", get(backtest))
        .route("/regions/{id}/simulate", post(simulate))
        .route("/regions/{id}/explain", post(explain))
        .route("/regions/{id}/best-case", post(best_case))
        .route("/regions/{id}/status", get(status))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn put_data(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::ingest::ValidationReport> {
    check_region_id(&id)?;
    let (report, frame) = ingest_upload(&body, &id)?;
    st.store.put_frame(&id, frame)?;
    Ok(Json(report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseScores {
    pub linear: f64,
    pub forest: f64,
    pub gbm: f64,
}

impl From<[f64; 3]> for BaseScores {
    fn from(v: [f64; 3]) -> Self {
        BaseScores {
            linear: v[0],
            forest: v[1],
            gbm: v[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub target: String,
    pub format_version: i64,
    pub trained_through: NaiveDate,
    pub seed: u64,
    pub n_features: usize,
    pub val_r2: BaseScores,
    pub ensemble_weights: BaseScores,
    pub hyperparams: EnsembleParams,
}

impl From<&ModelArtifact> for ModelSummary {
    fn from(a: &ModelArtifact) -> Self {
        ModelSummary {
            target: a.target_name.clone(),
            format_version: a.format_version,
            trained_through: a.trained_through,
            seed: a.seed,
            n_features: a.n_features(),
            val_r2: a.val_r2.into(),
            ensemble_weights: a.ensemble_weights.into(),
            hyperparams: a.hyperparams.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub region_id: String,
    pub cases: ModelSummary,
    pub revenue: ModelSummary,
}

impl TrainResponse {
    pub fn new(region: &str, pair: &ArtifactPair) -> Self {
        TrainResponse {
            region_id: region.to_string(),
            cases: (&pair.cases).into(),
            revenue: (&pair.revenue).into(),
        }
    }
}

async fn train(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<TrainResponse> {
    let patch: Option<Value> = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        Some(parse_body(&body)?)
    };
    let train_cfg: TrainConfig = overlay(&st.config.pipeline.train, patch.as_ref())?;
    let frame = st.store.frame(&id)?;
    let guard = st.store.try_begin_training(&id)?;
    let cfg = PipelineConfig {
        train: train_cfg,
        ..st.config.pipeline.clone()
    };
    let pair = blocking(move || train_pair(&frame, &cfg)).await?;
    st.store.install_models(&id, pair.clone())?;
    drop(guard);
    Ok(Json(TrainResponse::new(&id, &pair)))
}

#[derive(Debug, Deserialize)]
struct BacktestQuery {
    origins: Option<usize>,
    step: Option<usize>,
}

async fn backtest(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<BacktestQuery>,
) -> ApiResult<Value> {
    let frame = st.store.frame(&id)?;
    let cfg = st.config.pipeline.clone();
    match q.origins {
        None => {
            let report = blocking(move || run_backtest(&frame, &cfg)).await?;
            st.store.record_backtest(&id, report.clone());
            Ok(Json(serde_json::to_value(report).expect("serialisable")))
        }
        Some(n) => {
            let step = q.step.unwrap_or(7);
            let reports = blocking(move || rolling_backtest(&frame, n, step, &cfg)).await?;
            Ok(Json(serde_json::to_value(reports).expect("serialisable")))
        }
    }
}

async fn simulate(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::simulate::ForecastResult> {
    let spec: ScenarioSpec = parse_body(&body)?;
    let frame = st.store.frame(&id)?;
    let models = st.store.models(&id)?;
    let result = blocking(move || forecast(&models.cases, &models.revenue, &frame, &spec)).await?;
    Ok(Json(result))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainTarget {
    #[default]
    Cases,
    Revenue,
}

#[derive(Debug, Deserialize)]
struct ExplainRequest {
    date: NaiveDate,
    #[serde(default)]
    target: ExplainTarget,
    #[serde(default)]
    config: Option<Value>,
}

async fn explain(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Explanation> {
    let req: ExplainRequest = parse_body(&body)?;
    let lime: LimeConfig = overlay(&st.config.lime, req.config.as_ref())?;
    let frame = st.store.frame(&id)?;
    let models = st.store.models(&id)?;
    let e = blocking(move || {
        let artifact = match req.target {
            ExplainTarget::Cases => &models.cases,
            ExplainTarget::Revenue => &models.revenue,
        };
        explain_artifact(artifact, &frame, req.date, &lime)
    })
    .await?;
    Ok(Json(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub protect: f64,
    pub revenue: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            protect: 1.0,
            revenue: 1.0,
        }
    }
}

fn default_top() -> usize {
    10
}

#[derive(Debug, Deserialize)]
struct BestCaseRequest {
    space: SearchSpace,
    #[serde(default)]
    weights: ObjectiveWeights,
    #[serde(default = "default_top")]
    top: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BestCaseResponse {
    pub evaluated: usize,
    pub ranked: Vec<RankedScenario>,
}

async fn best_case(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<BestCaseResponse> {
    let req: BestCaseRequest = parse_body(&body)?;
    let frame = st.store.frame(&id)?;
    let models = st.store.models(&id)?;
    let mut ranked = blocking(move || {
        best_case_search(
            &models.cases,
            &models.revenue,
            &frame,
            &req.space,
            (req.weights.protect, req.weights.revenue),
        )
    })
    .await?;
    let evaluated = ranked.len();
    ranked.truncate(req.top);
    Ok(Json(BestCaseResponse { evaluated, ranked }))
}

#[derive(Debug, Deserialize)]
struct StatusQuery {
    today: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub region_id: String,
    pub n_rows: usize,
    pub last_date: Option<NaiveDate>,
    pub today: NaiveDate,
    pub trained_through: Option<NaiveDate>,
    pub retrain_due: Option<bool>,
}

async fn status(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<StatusQuery>,
) -> ApiResult<StatusResponse> {
    let frame = st.store.frame(&id)?;
    let today = q.today.unwrap_or_else(|| chrono::Local::now().date_naive());
    let trained_through = match st.store.models(&id) {
        Ok(m) => Some(m.cases.trained_through),
        Err(Error::NotTrained(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let retrain = trained_through.map(|t| retrain_due(t, today)).transpose()?;
    Ok(Json(StatusResponse {
        region_id: id,
        n_rows: frame.len(),
        last_date: frame.last_date(),
        today,
        trained_through,
        retrain_due: retrain,
    }))
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(store: Arc<RegionStore>, config: RunConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    let app = router(Arc::new(AppState { store, config }));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
