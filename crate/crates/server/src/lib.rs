//! HTTP play sessions: a person plays receiver against a trained sender.
//!
//! All routes live under `/v1` and speak JSON.

pub mod session;
pub mod stats;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use siglab_core::persist::atomic_write;
use siglab_core::worldgen::{GameMode, Side};

pub use session::{round_view, ChoiceOutcome, RoundLog, RoundView, Session, SessionSnapshot, SessionStats};
pub use stats::binomial_two_sided;
pub use store::{CheckpointStore, LoadedCheckpoint};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug)]
pub struct AppState {
    pub store: CheckpointStore,
    sessions: Mutex<HashMap<Uuid, Arc<Mutex<Session>>>>,
    /// Where session snapshots go; none disables them.
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: CheckpointStore, snapshot_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            store,
            sessions: Mutex::new(HashMap::new()),
            snapshot_dir,
        })
    }

    pub fn session(&self, id: Uuid) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("session table").get(&id).cloned()
    }

    fn lookup(&self, raw: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let id = Uuid::parse_str(raw).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {raw}")))?;
        self.session(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {raw}")))
    }

    fn snapshot(&self, session: &Session) -> ApiResult<()> {
        let Some(dir) = &self.snapshot_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(ApiError::internal)?;
        let text = serde_json::to_string_pretty(&session.snapshot()).map_err(ApiError::internal)?;
        atomic_write(&dir.join(format!("{}.json", session.id)), text.as_bytes()).map_err(ApiError::internal)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/round", get(get_round))
        .route("/v1/sessions/{id}/choice", post(post_choice))
        .route("/v1/sessions/{id}/stats", get(get_stats))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    checkpoint: String,
    mode: Option<GameMode>,
    #[serde(default)]
    online_update: bool,
    seed: Option<u64>,
    /// Step size for online updates; defaults to the checkpoint's.
    lr: Option<f64>,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("bad request body: {e}")))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    if let Some(lr) = req.lr {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(ApiError::bad_request(format!("lr must be finite and non-negative, got {lr}")));
        }
    }
    let ckpt = state.store.get(&req.checkpoint).map_err(|e| match e {
        store::StoreError::NotFound(id) => ApiError::new(StatusCode::NOT_FOUND, format!("unknown checkpoint {id}")),
        store::StoreError::Load(id, err) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("checkpoint {id} failed to load: {err}"))
        }
    })?;
    let id = Uuid::new_v4();
    let seed = req.seed.unwrap_or_else(rand::random);
    let mode = req.mode.unwrap_or(ckpt.checkpoint.config.mode);
    let lr = req.lr.unwrap_or(ckpt.checkpoint.config.lr);
    let session = Session::new(id, ckpt, mode, req.online_update, seed, lr);
    state.snapshot(&session)?;
    state
        .sessions
        .lock()
        .expect("session table")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "seed": seed, "mode": mode }))).into_response())
}

async fn get_round(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<RoundView>> {
    let session = state.lookup(&id)?;
    let mut s = session.lock().expect("session lock");
    s.round().map(Json).map_err(ApiError::internal)
}

fn parse_choice(body: &Bytes) -> ApiResult<(u64, Side)> {
    let v: Value = parse_body(body)?;
    let round_id = v
        .get("round_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| ApiError::bad_request("round_id must be a non-negative integer"))?;
    let side = match v.get("side").and_then(Value::as_str) {
        Some("left") => Side::L,
        Some("right") => Side::R,
        other => {
            return Err(ApiError::bad_request(format!(
                "side must be \"left\" or \"right\", got {}",
                other.map_or_else(|| "nothing".to_string(), |s| format!("{s:?}"))
            )))
        }
    };
    Ok((round_id, side))
}

async fn post_choice(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ChoiceOutcome>> {
    let session = state.lookup(&id)?;
    let (round_id, side) = parse_choice(&body)?;
    let mut s = session.lock().expect("session lock");
    let outcome = s.choose(round_id, side).map_err(ApiError::internal)?.map_err(|e| {
        let msg = match e {
            session::ChoiceError::NoPendingRound => "no pending round".to_string(),
            session::ChoiceError::StaleRound { expected, got } => {
                format!("round {got} is not pending; current round is {expected}")
            }
        };
        ApiError::new(StatusCode::CONFLICT, msg)
    })?;
    state.snapshot(&s)?;
    Ok(Json(outcome))
}

async fn get_stats(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.lookup(&id)?;
    let s = session.lock().expect("session lock");
    let stats = s.stats();
    Ok(Json(json!({
        "session_id": s.id,
        "checkpoint": s.checkpoint().id,
        "mode": s.mode,
        "online_update": s.online_update,
        "rounds": stats.rounds,
        "wins": stats.wins,
        "success_rate": stats.success_rate,
        "p_value": stats.p_value,
        "log": s.log(),
    })))
}
