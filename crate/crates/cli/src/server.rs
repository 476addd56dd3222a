//! JSON session API over an [`Engine`]. One mutex serializes every change,
//! so generation gating and ledger appends are atomic.

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rewardnet_core::experiment::{Engine, ExperimentError, NodeId, PlayerKind, PopulationSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub type Shared = Arc<Mutex<Engine>>;

pub struct ApiError(pub ExperimentError);

#[derive(Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<serde_json::Value>,
}

pub fn status_of(e: &ExperimentError) -> StatusCode {
    use ExperimentError::*;
    match e {
        UnknownPopulation(_) | UnknownSession(_) => StatusCode::NOT_FOUND,
        NoSeatAvailable | GenerationIncomplete { .. } | PhaseViolation { .. } | CorrectionRequired { .. } => {
            StatusCode::CONFLICT
        }
        InvalidSpec(_) | PoolExhausted { .. } | MissingMachines { .. } | IncompleteTrajectory { .. } | IllegalMove(_)
        | UnknownCandidate(_) => StatusCode::UNPROCESSABLE_ENTITY,
        CorruptLedger(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.0.code(), message: self.0.to_string(), detail: serde_json::to_value(&self.0).ok() };
        (status_of(&self.0), Json(body)).into_response()
    }
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { code: "bad_request", message, detail: None })).into_response()
}

/// Parses a JSON body; an empty body yields the type's default.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, Response> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| bad_request(format!("malformed body: {e}")))
}

fn required<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(bytes).map_err(|e| bad_request(format!("malformed body: {e}")))
}

type ApiResult<T> = Result<Json<T>, Response>;

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, Engine> {
    // a panic mid-request leaves the engine usable; every mutation is validated before it is applied
    state.lock().unwrap_or_else(|p| p.into_inner())
}

fn api<T>(r: Result<T, ExperimentError>) -> ApiResult<T> {
    r.map(Json).map_err(|e| ApiError(e).into_response())
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Serialize, Deserialize)]
pub struct PopulationSummary {
    pub id: String,
    pub condition: rewardnet_core::experiment::Condition,
    pub complete_seats: usize,
    pub seats: usize,
    pub complete: bool,
}

#[derive(Deserialize)]
#[serde(default)]
pub struct ClaimBody {
    pub kind: PlayerKind,
}

impl Default for ClaimBody {
    fn default() -> Self {
        ClaimBody { kind: PlayerKind::Human }
    }
}

#[derive(Deserialize)]
pub struct SelectBody {
    pub candidate_label: String,
}

#[derive(Deserialize)]
pub struct MoveBody {
    pub target: NodeId,
}

#[derive(Deserialize)]
pub struct TrajectoryBody {
    pub moves: Vec<NodeId>,
}

#[derive(Deserialize)]
pub struct StrategyBody {
    pub text: String,
    #[serde(default)]
    pub flag: Option<bool>,
}

async fn create_population(State(s): State<Shared>, bytes: Bytes) -> ApiResult<Created> {
    let spec: PopulationSpec = body(&bytes)?;
    api(lock(&s).create_population(spec).map(|id| Created { id }))
}

async fn list_populations(State(s): State<Shared>) -> Json<Vec<PopulationSummary>> {
    let e = lock(&s);
    Json(
        e.populations()
            .iter()
            .map(|p| {
                let run = p.run();
                PopulationSummary {
                    id: run.id.clone(),
                    condition: run.spec.condition,
                    complete_seats: run.seats.iter().flatten().filter(|s| s.complete).count(),
                    seats: run.spec.seats(),
                    complete: run.is_complete(),
                }
            })
            .collect(),
    )
}

async fn claim_in(State(s): State<Shared>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::Claim> {
    let b: ClaimBody = body(&bytes)?;
    api(lock(&s).claim(Some(&id), b.kind))
}

async fn claim_any(State(s): State<Shared>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::Claim> {
    let b: ClaimBody = body(&bytes)?;
    api(lock(&s).claim(None, b.kind))
}

async fn export(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    match lock(&s).export(&id) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(e) => ApiError(e).into_response(),
    }
}

async fn state(State(s): State<Shared>, Path(t): Path<String>) -> ApiResult<rewardnet_core::experiment::SessionView> {
    api(lock(&s).view(&t))
}

async fn advance(State(s): State<Shared>, Path(t): Path<String>) -> ApiResult<rewardnet_core::experiment::SessionView> {
    api(lock(&s).advance(&t))
}

async fn candidates(State(s): State<Shared>, Path(t): Path<String>) -> ApiResult<rewardnet_core::experiment::Candidates> {
    api(lock(&s).candidates(&t))
}

async fn select(State(s): State<Shared>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::SessionView> {
    let b: SelectBody = required(&bytes)?;
    api(lock(&s).select(&t, &b.candidate_label))
}

async fn replay(State(s): State<Shared>, Path(t): Path<String>) -> ApiResult<rewardnet_core::experiment::ReplayView> {
    api(lock(&s).replay(&t))
}

async fn play_move(State(s): State<Shared>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::MoveOutcome> {
    let b: MoveBody = required(&bytes)?;
    api(lock(&s).play_move(&t, b.target))
}

async fn trajectory(State(s): State<Shared>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::SessionView> {
    let b: TrajectoryBody = required(&bytes)?;
    api(lock(&s).submit_trajectory(&t, &b.moves))
}

async fn strategy(State(s): State<Shared>, Path(t): Path<String>, bytes: Bytes) -> ApiResult<rewardnet_core::experiment::SessionView> {
    let b: StrategyBody = required(&bytes)?;
    api(lock(&s).submit_strategy(&t, &b.text, b.flag))
}

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/populations", post(create_population).get(list_populations))
        .route("/populations/{id}/seats/claim", post(claim_in))
        .route("/populations/{id}/export", get(export))
        .route("/seats/claim", post(claim_any))
        .route("/sessions/{t}/state", get(state))
        .route("/sessions/{t}/advance", post(advance))
        .route("/sessions/{t}/candidates", get(candidates))
        .route("/sessions/{t}/select", post(select))
        .route("/sessions/{t}/replay", get(replay))
        .route("/sessions/{t}/move", post(play_move))
        .route("/sessions/{t}/trajectory", post(trajectory))
        .route("/sessions/{t}/strategy", post(strategy))
        .with_state(engine)
}

/// Binds and serves until interrupted.
pub async fn serve(engine: Engine, host: &str, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let app = router(Arc::new(Mutex::new(engine)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
