//! HTTP service for echogram segmentation. Heavy work runs on the blocking
//! pool; training runs as a background job polled by id.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use echoseg_core::api::{
    self, BaselineRequest, BaselineResponse, ErrorBody, EvaluateRequest, Health, InferRequest, InferResponse, JobState,
    JobStatus, ModelInfo, ScheduleRequest, ScheduleResponse, SynthRequest, SynthResponse, TrainRequest,
};
use echoseg_core::metrics::MetricsReport;
use echoseg_core::nnet::{load_checkpoint, UNet};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    Core(#[from] echoseg_core::Error),
    #[error("no model configured; pass model_path or start the server with --model")]
    NoModel,
    #[error("job {0} not found")]
    NoJob(u64),
    #[error("worker failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        use echoseg_core::Error as E;
        match self {
            Self::Core(E::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            Self::Core(E::Io { .. }) | Self::Join(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Self::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::NoModel => StatusCode::SERVICE_UNAVAILABLE,
            Self::NoJob(_) => StatusCode::NOT_FOUND,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Default)]
pub struct AppState {
    default_model: Option<PathBuf>,
    models: Mutex<HashMap<PathBuf, Arc<UNet<f32>>>>,
    jobs: Mutex<HashMap<u64, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(default_model: Option<PathBuf>) -> Self {
        Self { default_model, ..Self::default() }
    }

    /// Loads a checkpoint once and keeps it for later requests.
    fn model(&self, path: Option<&str>) -> Result<(PathBuf, Arc<UNet<f32>>), ApiError> {
        let path = path.map(PathBuf::from).or_else(|| self.default_model.clone()).ok_or(ApiError::NoModel)?;
        if let Some(m) = self.models.lock().unwrap().get(&path) {
            return Ok((path, m.clone()));
        }
        let (model, _) = load_checkpoint::<f32>(&path)?;
        let model = Arc::new(model);
        self.models.lock().unwrap().insert(path.clone(), model.clone());
        Ok((path, model))
    }

    fn set_job(&self, status: JobStatus) {
        self.jobs.lock().unwrap().insert(status.id, status);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/model", get(model_info))
        .route("/v1/infer", post(infer))
        .route("/v1/baseline", post(baseline))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/synth", post(synth))
        .route("/v1/schedule", post(schedule))
        .route("/v1/train", post(train))
        .route("/v1/jobs/{id}", get(job))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    Ok(Json(tokio::task::spawn_blocking(f).await??))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn model_info(State(state): State<Arc<AppState>>) -> ApiResult<ModelInfo> {
    blocking(move || {
        let (path, model) = state.model(None)?;
        Ok(ModelInfo::describe(&model, &path))
    })
    .await
}

async fn infer(State(state): State<Arc<AppState>>, Json(req): Json<InferRequest>) -> ApiResult<InferResponse> {
    blocking(move || {
        let (path, model) = state.model(req.model_path.as_deref())?;
        Ok(api::handle_infer(&req, &model, &api::model_id(&path))?)
    })
    .await
}

async fn baseline(Json(req): Json<BaselineRequest>) -> ApiResult<BaselineResponse> {
    blocking(move || Ok(api::handle_baseline(&req)?)).await
}

async fn evaluate(Json(req): Json<EvaluateRequest>) -> ApiResult<MetricsReport> {
    blocking(move || Ok(api::handle_evaluate(&req)?)).await
}

async fn synth(Json(req): Json<SynthRequest>) -> ApiResult<SynthResponse> {
    blocking(move || Ok(api::handle_synth(&req)?)).await
}

async fn schedule(Json(req): Json<ScheduleRequest>) -> ApiResult<ScheduleResponse> {
    Ok(Json(api::handle_schedule(&req)?))
}

async fn train(State(state): State<Arc<AppState>>, Json(req): Json<TrainRequest>) -> (StatusCode, Json<JobStatus>) {
    let id = state.next_job.fetch_add(1, Ordering::Relaxed) + 1;
    let running = JobStatus { id, state: JobState::Running, result: None, error: None };
    state.set_job(running.clone());
    log::info!("training job {id} started, output in {}", req.out_dir);
    tokio::task::spawn_blocking(move || {
        let status = match api::handle_train(&req) {
            Ok(res) => JobStatus { id, state: JobState::Succeeded, result: Some(res), error: None },
            Err(e) => {
                log::warn!("training job {id} failed: {e}");
                JobStatus { id, state: JobState::Failed, result: None, error: Some(e.to_string()) }
            }
        };
        state.set_job(status);
    });
    (StatusCode::ACCEPTED, Json(running))
}

async fn job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<JobStatus> {
    state.jobs.lock().unwrap().get(&id).cloned().map(Json).ok_or(ApiError::NoJob(id))
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, default_model: Option<&Path>) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(default_model.map(Path::to_path_buf)));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
