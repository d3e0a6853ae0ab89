//! HTTP wiring over the challenge state machine.
//!
//! Endpoints:
//! - `POST /api/teams` `{name}` -> `{team_id, token}`
//! - `POST /api/submissions` (bearer auth, text/csv body)
//!   -> `{submission_id, preview_auc}` or `{code, detail}` with 401/422/429
//! - `GET /api/leaderboard?mode=preview|final` -> entry array
//! - `GET /api/challenge` -> `{phase, n_test, preview_fraction, preview_size}`

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::state::{Challenge, LeaderboardMode, Rejection, ServiceError};

/// Service configuration file (JSON); every field overridable by CLI flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub test_manifest: PathBuf,
    pub preview_fraction: f64,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            test_manifest: PathBuf::from("test-manifest.csv"),
            preview_fraction: 0.15,
            seed: 0,
            data_dir: PathBuf::from("challenge-data"),
            bind: "127.0.0.1:8787".to_string(),
        }
    }
}

/// Open the challenge in `data_dir`: replay the event log when one exists,
/// otherwise create a fresh challenge.
pub fn open_challenge(cfg: &ServerConfig) -> Result<Challenge, ServiceError> {
    let truth = avibench_core::manifest::load_manifest(&cfg.test_manifest)?;
    let log = cfg.data_dir.join("events.jsonl");
    if log.exists() {
        Challenge::replay(truth, &log)
    } else {
        Challenge::create(truth, cfg.preview_fraction, cfg.seed, &log)
    }
}

pub fn router(challenge: Arc<Challenge>) -> Router {
    Router::new()
        .route("/api/teams", post(register_team))
        .route("/api/submissions", post(submit))
        .route("/api/leaderboard", get(leaderboard))
        .route("/api/challenge", get(challenge_info))
        .with_state(challenge)
}

/// Serve until the process exits.
pub async fn serve(challenge: Arc<Challenge>, bind: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    axum::serve(listener, router(challenge)).await?;
    Ok(())
}

fn reject(r: Rejection) -> Response {
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(serde_json::json!({ "code": r.code, "detail": r.detail }))).into_response()
}

#[derive(Deserialize)]
struct RegisterBody {
    name: String,
}

async fn register_team(
    State(ch): State<Arc<Challenge>>,
    Json(body): Json<RegisterBody>,
) -> Response {
    if body.name.trim().is_empty() {
        return reject(Rejection {
            status: 422,
            code: "bad-name".into(),
            detail: "team name must be non-empty".into(),
        });
    }
    match ch.register_team(&body.name) {
        Ok(t) => {
            Json(serde_json::json!({ "team_id": t.team_id, "token": t.token })).into_response()
        }
        Err(e) => reject(Rejection {
            status: 500,
            code: "internal".into(),
            detail: e.to_string(),
        }),
    }
}

async fn submit(State(ch): State<Arc<Challenge>>, headers: HeaderMap, body: String) -> Response {
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    let Some(token) = token else {
        return reject(Rejection {
            status: 401,
            code: "missing-token".into(),
            detail: "Authorization: Bearer <token> required".into(),
        });
    };
    match ch.submit(token, &body) {
        Ok((submission_id, preview_auc)) => Json(serde_json::json!({
            "submission_id": submission_id,
            "preview_auc": preview_auc,
        }))
        .into_response(),
        Err(r) => reject(r),
    }
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    mode: Option<String>,
}

async fn leaderboard(
    State(ch): State<Arc<Challenge>>,
    Query(q): Query<LeaderboardQuery>,
) -> Response {
    let mode = match q.mode.as_deref() {
        None | Some("preview") => LeaderboardMode::Preview,
        Some("final") => LeaderboardMode::Final,
        Some(other) => {
            return reject(Rejection {
                status: 422,
                code: "bad-mode".into(),
                detail: format!("mode must be preview or final, got {other}"),
            })
        }
    };
    match ch.leaderboard(mode) {
        Ok(entries) => Json(entries).into_response(),
        Err(r) => reject(r),
    }
}

async fn challenge_info(State(ch): State<Arc<Challenge>>) -> Response {
    Json(ch.info()).into_response()
}
