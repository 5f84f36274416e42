//! HTTP/JSON service exposing enhancement, training and analysis commands
//! plus push/pull streaming sessions.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gse_core::api::{
    Chunk, ErrorBody, Health, PushRequest, PushResponse, StreamOpenRequest, StreamOpened,
    StreamSummary,
};
use gse_core::pipeline::{self, check_compatible};
use gse_core::streaming::{realtime_factor, StreamSession};
use gse_core::{DenoiserModel, ScoreModel};
use tokio::net::TcpListener;
use uuid::Uuid;

/// Request bodies carry checkpoints and audio, so the limit is generous.
pub const BODY_LIMIT: usize = 512 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Core(#[from] gse_core::Error),
    #[error("no stream with id {0}")]
    UnknownStream(String),
    #[error("worker task failed: {0}")]
    Worker(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::Core(e) => match e {
                gse_core::Error::Config(_)
                | gse_core::Error::Dimension(_)
                | gse_core::Error::Domain(_)
                | gse_core::Error::UnsupportedFormat(_)
                | gse_core::Error::Malformed { .. } => StatusCode::BAD_REQUEST,
                gse_core::Error::Numerical { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                gse_core::Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::UnknownStream(_) => StatusCode::NOT_FOUND,
            ApiError::Worker(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::Core(e) => e.kind(),
            ApiError::UnknownStream(_) => "not_found",
            ApiError::Worker(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            kind: self.kind().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Default)]
pub struct AppState {
    streams: Mutex<HashMap<String, Arc<Mutex<StreamSession>>>>,
    threads: Option<usize>,
}

impl AppState {
    pub fn new(threads: Option<usize>) -> Self {
        Self {
            streams: Mutex::default(),
            threads,
        }
    }

    fn stream(&self, id: &str) -> Result<Arc<Mutex<StreamSession>>, ApiError> {
        self.streams
            .lock()
            .expect("stream table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownStream(id.to_string()))
    }
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Worker(e.to_string()))?
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/simulate-forward", post(simulate_forward))
        .route("/v1/train", post(train))
        .route("/v1/enhance", post(enhance))
        .route("/v1/sweep", post(sweep))
        .route("/v1/cost", post(cost))
        .route("/v1/streams", post(open_stream))
        .route("/v1/streams/{id}", axum::routing::delete(close_stream))
        .route("/v1/streams/{id}/push", post(push))
        .route("/v1/streams/{id}/pull", get(pull))
        .route("/v1/streams/{id}/finish", post(finish))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn simulate_forward(
    Json(req): Json<pipeline::ForwardRequest>,
) -> ApiResult<pipeline::ForwardTable> {
    blocking(move || Ok(pipeline::simulate_forward(&req)?)).await.map(Json)
}

async fn train(Json(req): Json<pipeline::TrainRequest>) -> ApiResult<pipeline::TrainResult> {
    blocking(move || Ok(pipeline::train_model(&req)?)).await.map(Json)
}

async fn enhance(Json(req): Json<pipeline::EnhanceRequest>) -> ApiResult<pipeline::EnhanceResult> {
    blocking(move || Ok(pipeline::enhance(&req)?)).await.map(Json)
}

async fn sweep(
    State(state): State<Arc<AppState>>,
    Json(req): Json<pipeline::SweepRequest>,
) -> ApiResult<pipeline::SweepTable> {
    let threads = state.threads;
    blocking(move || Ok(pipeline::sweep(&req, threads)?)).await.map(Json)
}

async fn cost(Json(req): Json<pipeline::CostRequest>) -> ApiResult<pipeline::CostTable> {
    blocking(move || Ok(pipeline::cost_report(&req)?)).await.map(Json)
}

async fn open_stream(
    State(state): State<Arc<AppState>>,
    Json(req): Json<StreamOpenRequest>,
) -> Result<(StatusCode, Json<StreamOpened>), ApiError> {
    let score = req.score.score_net()?;
    check_compatible(&score, &req.sde)?;
    let denoiser = req.denoiser.as_ref().map(|c| c.denoiser()).transpose()?;
    let schedule = req.guidance.schedule(&req.sde)?;
    let session = StreamSession::new(
        Arc::new(score) as Arc<dyn ScoreModel>,
        denoiser.map(|d| Arc::new(d) as Arc<dyn DenoiserModel>),
        schedule,
        req.sampler,
        req.sde,
        req.stream,
        req.seed,
        req.gain,
    )?;
    let id = Uuid::new_v4().to_string();
    let opened = StreamOpened {
        id: id.clone(),
        chunk_size: req.stream.chunk_size(),
        n_phi: schedule.n_phi,
        algorithmic_latency_ms: req.stream.chunk_ms,
    };
    state
        .streams
        .lock()
        .expect("stream table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(opened)))
}

async fn push(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<PushRequest>,
) -> ApiResult<PushResponse> {
    let session = state.stream(&id)?;
    blocking(move || {
        let mut s = session.lock().expect("stream poisoned");
        let produced = s.push(&req.samples)?;
        Ok(PushResponse {
            produced,
            pending_samples: s.pending_samples(),
        })
    })
    .await
    .map(Json)
}

async fn pull(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.stream(&id)?;
    let chunk = session.lock().expect("stream poisoned").pull();
    Ok(match chunk {
        Some(samples) => Json(Chunk { samples }).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn finish(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<PushResponse> {
    let session = state.stream(&id)?;
    blocking(move || {
        let mut s = session.lock().expect("stream poisoned");
        s.finish()?;
        Ok(PushResponse {
            produced: 0,
            pending_samples: s.pending_samples(),
        })
    })
    .await
    .map(Json)
}

async fn close_stream(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<StreamSummary> {
    let session = state
        .streams
        .lock()
        .expect("stream table poisoned")
        .remove(&id)
        .ok_or_else(|| ApiError::UnknownStream(id.clone()))?;
    let mut s = session.lock().expect("stream poisoned");
    let mut unpulled = Vec::new();
    while let Some(c) = s.pull() {
        unpulled.push(c);
    }
    Ok(Json(StreamSummary {
        chunks: s.bank().chunks_processed(),
        bank_states: s.bank().len(),
        ledger: *s.ledger(),
        realtime_factor: realtime_factor(s.report()).ok(),
        latency: s.report().clone(),
        unpulled,
    }))
}

/// A bound, running server.
pub struct Running {
    pub addr: SocketAddr,
    pub handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

/// Binds `addr` and serves on the current runtime until the task is dropped
/// or aborted.
pub async fn spawn(addr: SocketAddr, threads: Option<usize>) -> std::io::Result<Running> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = router(Arc::new(AppState::new(threads)));
    tracing::info!(%addr, "listening");
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(Running { addr, handle })
}
