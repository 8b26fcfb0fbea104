use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qoe_core::experiments::Campaign;
use serde_json::json;

use super::{
    CompletionNotice, FlagRequest, OpenSessionRequest, Service, ServiceError, SessionState, Submission, Verifier,
};
use crate::archive::to_tar;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    pub verifier: Verifier,
    pub http: reqwest::Client,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::InvalidCampaign(_) | ServiceError::MissingMedia(_) | ServiceError::Malformed(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::UnknownCampaign(_) | ServiceError::UnknownSession | ServiceError::UnknownUnit(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::VerificationFailed | ServiceError::ForeignEvents => StatusCode::FORBIDDEN,
            ServiceError::WrongState(SessionState::Abandoned) => StatusCode::GONE,
            ServiceError::CampaignExists(_)
            | ServiceError::Exhausted(_)
            | ServiceError::WrongState(_)
            | ServiceError::OutOfOrder { .. }
            | ServiceError::Duplicate(_)
            | ServiceError::NothingToExport(_) => StatusCode::CONFLICT,
            ServiceError::VerifierUnavailable(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Store(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Runs blocking service work (it fsyncs the event log) off the async workers.
async fn run<T, F>(state: &AppState, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = state.service.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_campaign(State(st): State<AppState>, Json(c): Json<Campaign>) -> Result<impl IntoResponse, ServiceError> {
    let id = run(&st, move |s| s.create_campaign(c)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "campaign_id": id }))))
}

async fn get_campaign(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(run(&st, move |s| s.get_campaign(&id)).await?))
}

async fn open_session(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<OpenSessionRequest>,
) -> Result<impl IntoResponse, ServiceError> {
    let ok = st
        .verifier
        .verify(&req.verifier_proof)
        .await
        .map_err(ServiceError::VerifierUnavailable)?;
    if !ok {
        return Err(ServiceError::VerificationFailed);
    }
    let opened = run(&st, move |s| s.open_session(&id, &req)).await?;
    Ok((StatusCode::CREATED, Json(opened)))
}

async fn next_unit(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(run(&st, move |s| s.next_unit(&id)).await?))
}

async fn submit(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(sub): Json<Submission>,
) -> Result<impl IntoResponse, ServiceError> {
    let sid = id.clone();
    let out = run(&st, move |s| s.submit_response(&sid, sub)).await?;
    if let (Some(code), Some(url)) = (&out.completion_code, st.service.provider().callback_url()) {
        let notice = CompletionNotice { session_id: id, code: code.clone() };
        let client = st.http.clone();
        let url = url.to_string();
        tokio::spawn(async move {
            if let Err(e) = client.post(&url).json(&notice).send().await.and_then(|r| r.error_for_status()) {
                tracing::warn!("completion callback for {} failed: {e}", notice.session_id);
            }
        });
    }
    Ok(Json(out))
}

async fn telemetry(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ServiceError::Malformed("body is not UTF-8".into()))?;
    Ok(Json(run(&st, move |s| s.ingest_telemetry(&id, &text)).await?))
}

async fn flag(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FlagRequest>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(run(&st, move |s| s.flag_unit(&id, &req)).await?))
}

async fn export(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let files = run(&st, move |s| s.export(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-tar")], to_tar(&files)))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/sessions", post(open_session))
        .route("/campaigns/{id}/export", get(export))
        .route("/sessions/{id}/next", get(next_unit))
        .route("/sessions/{id}/responses", post(submit))
        .route("/sessions/{id}/telemetry", post(telemetry))
        .route("/units/{id}/flag", post(flag))
        .with_state(state)
}
