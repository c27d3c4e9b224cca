use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, NaiveDate, Utc};
use panelwise_core::analytics::usage_for_profile;
use panelwise_core::{expected_inputs, Phase, PromptType, UserInput};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{blocking, ApiError, AppState};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("malformed body: {e}")))
}

#[derive(Deserialize)]
struct CreateSession {
    profile_id: String,
    peer_id: String,
}

pub async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    let engine = state.engine.clone();
    let out = blocking(move || Ok(engine.create_session(&req.profile_id, &req.peer_id)?)).await?;
    Ok((StatusCode::CREATED, Json(out.session)).into_response())
}

#[derive(Serialize)]
pub struct SessionSummary {
    id: String,
    profile_id: String,
    peer_id: String,
    phase: Phase,
    prompt_type: Option<PromptType>,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
pub struct ProfileFilter {
    profile_id: Option<String>,
}

pub async fn list(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ProfileFilter>,
) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let engine = state.engine.clone();
    let sessions = blocking(move || Ok(engine.store().list_sessions()?)).await?;
    Ok(Json(
        sessions
            .into_iter()
            .filter(|s| q.profile_id.as_ref().is_none_or(|p| &s.profile_id == p))
            .map(|s| SessionSummary {
                id: s.id,
                profile_id: s.profile_id,
                peer_id: s.peer_id,
                phase: s.phase,
                prompt_type: s.prompt_type,
                created_at: s.created_at,
            })
            .collect(),
    ))
}

pub async fn show(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let session = blocking(move || Ok(engine.session(&id)?)).await?;
    Ok(Json(session).into_response())
}

pub async fn expected(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let session = blocking(move || Ok(engine.session(&id)?)).await?;
    Ok(Json(expected_inputs(&session)).into_response())
}

pub async fn strip(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let session = blocking(move || Ok(engine.session(&id)?)).await?;
    Ok(Json(session.scenes).into_response())
}

async fn apply(state: &Arc<AppState>, id: String, input: UserInput) -> Result<Value, ApiError> {
    let engine = state.engine.clone();
    let sid = id.clone();
    let out = blocking(move || Ok(engine.handle_input(&sid, input)?)).await?;
    state.notify(&id);
    let mut body = json!({ "session_snapshot": out.session, "actions": out.actions });
    if let Some(j) = out.journal {
        body["journal"] = json!(j);
    }
    Ok(body)
}

/// Applies one input. With an `Idempotency-Key` header, a repeated delivery
/// gets the first successful reply back without touching the session.
pub async fn input(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let input: UserInput = parse(&body)?;
    let key = match headers.get(IDEMPOTENCY_HEADER) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::unprocessable("idempotency key is not ASCII"))?
                .to_string(),
        ),
        None => None,
    };
    let Some(key) = key else {
        return Ok(Json(apply(&state, id, input).await?).into_response());
    };
    let slot = state.reply_slot(&id, &key);
    let mut cached = slot.lock().await;
    if let Some(reply) = cached.as_ref() {
        let mut resp = Json(reply.clone()).into_response();
        resp.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        return Ok(resp);
    }
    let reply = apply(&state, id, input).await?;
    *cached = Some(reply.clone());
    Ok(Json(reply).into_response())
}

#[derive(Deserialize)]
pub struct JournalQuery {
    profile_id: Option<String>,
    from: Option<String>,
    to: Option<String>,
}

fn date(raw: Option<String>, name: &str) -> Result<Option<NaiveDate>, ApiError> {
    raw.map(|d| {
        NaiveDate::parse_from_str(&d, "%Y-%m-%d")
            .map_err(|_| ApiError::unprocessable(format!("`{name}` must be YYYY-MM-DD, got `{d}`")))
    })
    .transpose()
}

pub async fn journals(
    State(state): State<Arc<AppState>>,
    Query(q): Query<JournalQuery>,
) -> Result<Response, ApiError> {
    let from = date(q.from, "from")?;
    let to = date(q.to, "to")?;
    let engine = state.engine.clone();
    let list = blocking(move || Ok(engine.store().list_journals(q.profile_id.as_deref(), from, to)?)).await?;
    Ok(Json(list).into_response())
}

pub async fn journal(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let j = blocking(move || Ok(engine.store().load_journal(&id)?)).await?;
    Ok(Json(j).into_response())
}

pub async fn stats(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ProfileFilter>,
) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let stats = blocking(move || Ok(usage_for_profile(engine.store(), q.profile_id.as_deref())?)).await?;
    Ok(Json(stats).into_response())
}
