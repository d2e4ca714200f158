//! HTTP facade for the describer/listener game.
//!
//! Sessions live in memory. The session map is behind a read-write lock and
//! every session behind its own async mutex, so requests to one session are
//! applied in a total order while different sessions proceed independently.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bishop_core::par::mix_seed;
use bishop_core::resolution::{CandidateReport, Consistency, Engine};
use bishop_core::scene::{cone_triangle, generate_scene, ObjectId, SceneState, MAX_OBJECTS};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;
use uuid::Uuid;

pub const DEFAULT_IDLE_EXPIRY: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: ObjectId,
    /// Triangle in board pixels: apex, base-left, base-right.
    pub polygon: Vec<[f64; 2]>,
    /// `#rrggbb`.
    pub colour: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectView>,
}

impl SceneView {
    pub fn of(state: &SceneState) -> Self {
        let scene = state.scene();
        let objects = scene
            .objects
            .iter()
            .filter(|o| !o.is_composite)
            .map(|o| {
                let [r, g, b] = o.colour.base_rgb().map(|c| c.round() as u8);
                ObjectView {
                    id: o.id,
                    polygon: cone_triangle(o, scene.width, scene.height).to_vec(),
                    colour: format!("#{r:02x}{g:02x}{b:02x}"),
                }
            })
            .collect();
        SceneView {
            width: scene.width,
            height: scene.height,
            objects,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pending,
    Correct,
    Incorrect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub utterance: String,
    pub chosen: Option<ObjectId>,
    pub consistency: Consistency,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<ObjectId>,
}

pub struct Session {
    state: SceneState,
    score: Score,
    transcript: Vec<TranscriptEntry>,
    turn: u64,
    last_used: Instant,
}

impl Session {
    fn pending(&self) -> Option<&TranscriptEntry> {
        self.transcript.last().filter(|e| e.outcome == Outcome::Pending)
    }
}

#[derive(Clone)]
pub struct AppState {
    engine: Engine,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
    idle_expiry: Duration,
}

impl AppState {
    pub fn new(engine: Engine, idle_expiry: Duration) -> Self {
        AppState {
            engine,
            sessions: Arc::default(),
            idle_expiry,
        }
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    /// Drops sessions idle for longer than the expiry as of `now`; returns
    /// how many were removed.
    pub async fn sweep_expired(&self, now: Instant) -> usize {
        let mut sessions = self.sessions.write().await;
        let before = sessions.len();
        let mut keep = HashMap::with_capacity(before);
        for (id, s) in sessions.drain() {
            // A session whose lock is held is in use, hence not idle.
            let idle = s
                .try_lock()
                .map(|g| now.saturating_duration_since(g.last_used) > self.idle_expiry)
                .unwrap_or(false);
            if !idle {
                keep.insert(id, s);
            }
        }
        *sessions = keep;
        before - sessions.len()
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateRequest {
    pub seed: Option<u64>,
    pub objects: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub seed: u64,
    pub scene: SceneView,
}

#[derive(Debug, Deserialize)]
pub struct UtteranceRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UtteranceResponse {
    pub chosen: Option<ObjectId>,
    pub consistency: Consistency,
    pub used_random_tiebreak: bool,
    pub candidates: Vec<CandidateReport>,
}

#[derive(Debug, Deserialize)]
pub struct ConfirmRequest {
    pub correct: bool,
    pub target: Option<ObjectId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfirmResponse {
    pub scene: SceneView,
    pub score: Score,
    pub removed: Option<ObjectId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub scene: SceneView,
    pub score: Score,
    pub transcript: Vec<TranscriptEntry>,
}

async fn create_session(
    State(app): State<AppState>,
    body: Option<Json<CreateRequest>>,
) -> Result<Json<CreateResponse>, ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let n = req.objects.unwrap_or(MAX_OBJECTS);
    if n == 0 || n > MAX_OBJECTS {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_objects",
            format!("objects must be between 1 and {MAX_OBJECTS}, got {n}"),
        ));
    }
    let id = Uuid::new_v4();
    let seed = req.seed.unwrap_or_else(|| id.as_u64_pair().0);
    let state = tokio::task::spawn_blocking(move || generate_scene(seed, n))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "generation_failed", e.to_string()))?;
    let scene = SceneView::of(&state);
    let session = Session {
        state,
        score: Score::default(),
        transcript: Vec::new(),
        turn: 0,
        last_used: Instant::now(),
    };
    let id = id.to_string();
    app.sessions
        .write()
        .await
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(CreateResponse { id, seed, scene }))
}

async fn get_scene(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let session = app.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = Instant::now();
    Ok(Json(SessionView {
        scene: SceneView::of(&s.state),
        score: s.score,
        transcript: s.transcript.clone(),
    }))
}

async fn submit_utterance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<UtteranceRequest>,
) -> Result<Json<UtteranceResponse>, ApiError> {
    let session = app.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = Instant::now();
    if s.state.scene().objects.is_empty() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "scene_empty",
            "every object has been removed",
        ));
    }
    let seed = mix_seed(s.state.rng_seed, s.turn);
    s.turn += 1;
    let (engine, state, text) = (app.engine.clone(), s.state.clone(), req.text.clone());
    let res = tokio::task::spawn_blocking(move || engine.resolve(&text, &state, seed))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    if s.pending().is_some() {
        s.transcript.pop();
    }
    s.transcript.push(TranscriptEntry {
        utterance: req.text,
        chosen: res.chosen,
        consistency: res.consistency,
        outcome: Outcome::Pending,
        target: None,
    });
    Ok(Json(UtteranceResponse {
        chosen: res.chosen,
        consistency: res.consistency,
        used_random_tiebreak: res.used_random_tiebreak,
        candidates: res.candidates,
    }))
}

async fn confirm(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ConfirmRequest>,
) -> Result<Json<ConfirmResponse>, ApiError> {
    let session = app.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = Instant::now();
    let Some(pending) = s.pending().cloned() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "no_pending_selection",
            "submit an utterance first",
        ));
    };
    if let Some(t) = req.target {
        if !s.state.scene().contains(t) {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "target_not_in_scene",
                format!("object {t} is not in the scene"),
            ));
        }
    }
    let mut removed = None;
    if req.correct {
        let Some(chosen) = pending.chosen else {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "nothing_chosen",
                "the listener chose no object",
            ));
        };
        if req.target.is_some_and(|t| t != chosen) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "target_mismatch",
                "a correct selection must name the chosen object",
            ));
        }
        s.state = s
            .state
            .remove_object(chosen)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        s.score.correct += 1;
        removed = Some(chosen);
    }
    s.score.attempts += 1;
    if let Some(last) = s.transcript.last_mut() {
        last.outcome = if req.correct {
            Outcome::Correct
        } else {
            Outcome::Incorrect
        };
        last.target = req.target.or(removed);
    }
    Ok(Json(ConfirmResponse {
        scene: SceneView::of(&s.state),
        score: s.score,
        removed,
    }))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/scene", get(get_scene))
        .route("/sessions/{id}/utterance", post(submit_utterance))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/healthz", get(healthz))
        .layer(CorsLayer::permissive())
        .with_state(app)
}
