use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::net::SocketAddr;
use std::sync::Arc;

use super::{ResponseRequest, Service, SessionRequest};
use crate::error::Error;

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::InvalidArgument(_) | Error::Ingestion(_) | Error::Config(_) | Error::Json(_) => StatusCode::BAD_REQUEST,
        Error::UnsupportedChannel(_) => StatusCode::BAD_REQUEST,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::InfeasibleTarget(_) | Error::Construction(_) | Error::Initialization(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::json!({ "code": self.0.code(), "message": self.0.to_string() });
        if let Error::Ingestion(lines) = &self.0 {
            body["lines"] = serde_json::to_value(lines).unwrap_or_default();
        }
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    Ok(serde_json::from_slice(body).map_err(Error::from)?)
}

/// Runs `f` on the blocking pool; sampling and selection are CPU-bound.
async fn blocking<T, F>(f: F) -> ApiResult<Json<T>>
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> crate::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::invalid(format!("worker failed: {e}"))))?
        .map(Json)
        .map_err(ApiError)
}

async fn post_catalog(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| Error::invalid("catalog must be UTF-8 JSONL"))?;
    let info = blocking(move || svc.ingest_catalog(&text)).await?;
    Ok((StatusCode::CREATED, info))
}

async fn post_session(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: SessionRequest = parse(&body)?;
    let created = blocking(move || svc.create_session(request)).await?;
    Ok((StatusCode::CREATED, created))
}

async fn get_question(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    blocking(move || svc.next_question(&id)).await
}

async fn post_response(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let request: ResponseRequest = parse(&body)?;
    blocking(move || svc.submit_response(&id, &request)).await
}

async fn get_state(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    blocking(move || svc.state(&id)).await
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/catalogs", post(post_catalog))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/question", get(get_question))
        .route("/sessions/{id}/response", post(post_response))
        .route("/sessions/{id}/state", get(get_state))
        .with_state(service)
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, service: Arc<Service>) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::invalid(format!("cannot bind {addr}: {e}")))?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::invalid(format!("server error: {e}")))
}
