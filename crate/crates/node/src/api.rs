//! JSON-over-HTTP API under `/v1`. Every response is an [`ApiEnvelope`].

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use serde::{Deserialize, Serialize};
use sugarchain_core::identity::{RegistrationForm, RECOVERY_QUESTIONS};
use sugarchain_core::{Digest, UserId};
use tokio::net::TcpListener;

use crate::service::SubmitRequest;
use crate::{NodeError, NodeService};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

/// Exactly one of `result` and `error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope<T> {
    pub request_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

impl<T> ApiEnvelope<T> {
    pub fn success(request_id: String, result: T) -> Self {
        Self {
            request_id,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn failure(request_id: String, err: &NodeError) -> Self {
        Self {
            request_id,
            ok: false,
            result: None,
            error: Some(ApiError {
                code: err.code().to_owned(),
                message: err.to_string(),
            }),
        }
    }
}

pub fn status_for(err: &NodeError) -> StatusCode {
    match err.code() {
        "BadRequest" | "ConfigInvalid" | "SchemaMismatch" | "BadValue" | "EmptyFile" | "EmptyInput"
        | "NothingToReport" => StatusCode::BAD_REQUEST,
        "SessionUnknown" | "SessionExpired" | "BadPassword" | "RecoveryFailed" => StatusCode::UNAUTHORIZED,
        "Unauthorized" | "StaleCustody" => StatusCode::FORBIDDEN,
        "NotFound" | "UnknownLot" | "UnknownUser" => StatusCode::NOT_FOUND,
        "AlreadyRegistered" | "DuplicateTransaction" => StatusCode::CONFLICT,
        "CorruptStore" | "Io" | "NotInitialized" | "AlreadyInitialized" | "PortInUse" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn request_id(headers: &HeaderMap) -> String {
    headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty() && v.len() <= 128)
        .map(str::to_owned)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string())
}

fn respond<T: Serialize>(rid: String, out: Result<T, NodeError>) -> Response {
    match out {
        Ok(v) => (StatusCode::OK, Json(ApiEnvelope::success(rid, v))).into_response(),
        Err(e) => (status_for(&e), Json(ApiEnvelope::<()>::failure(rid, &e))).into_response(),
    }
}

/// Run a handler off the async executor; key derivation is deliberately slow.
async fn call<T, F>(svc: &Arc<NodeService>, headers: &HeaderMap, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&NodeService) -> Result<T, NodeError> + Send + 'static,
{
    let rid = request_id(headers);
    let svc = Arc::clone(svc);
    let out = tokio::task::spawn_blocking(move || f(&svc))
        .await
        .unwrap_or_else(|e| Err(NodeError::Io(format!("handler failed: {e}"))));
    respond(rid, out)
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, NodeError> {
    b.map(|Json(v)| v).map_err(|e| NodeError::BadRequest(e.body_text()))
}

fn digest(s: &str) -> Result<Digest, NodeError> {
    Digest::from_hex(s).map_err(|e| NodeError::BadRequest(format!("{s:?}: {e}")))
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(axum::http::header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(str::to_owned)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user_id: UserId,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoverRequest {
    pub user_id: UserId,
    pub answers: [String; RECOVERY_QUESTIONS],
    pub new_password: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BlockRange {
    pub from: Option<u64>,
    pub to: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyReport {
    pub report: String,
}

type Svc = State<Arc<NodeService>>;

async fn register(State(s): Svc, h: HeaderMap, b: Result<Json<RegistrationForm>, JsonRejection>) -> Response {
    call(&s, &h, move |svc| svc.register(&body(b)?)).await
}

async fn login(State(s): Svc, h: HeaderMap, b: Result<Json<LoginRequest>, JsonRejection>) -> Response {
    call(&s, &h, move |svc| {
        let r = body(b)?;
        svc.login(&r.user_id, &r.password)
    })
    .await
}

async fn recover(State(s): Svc, h: HeaderMap, b: Result<Json<RecoverRequest>, JsonRejection>) -> Response {
    call(&s, &h, move |svc| {
        let r = body(b)?;
        svc.recover(&r.user_id, &r.answers, &r.new_password)
    })
    .await
}

async fn submit(State(s): Svc, h: HeaderMap, b: Result<Json<SubmitRequest>, JsonRejection>) -> Response {
    let token = bearer(&h);
    call(&s, &h, move |svc| {
        // authenticate before looking at the body
        svc.authenticate(token.as_deref())?;
        svc.submit(token.as_deref(), body(b)?)
    })
    .await
}

async fn get_tx(State(s): Svc, h: HeaderMap, Path(id): Path<String>) -> Response {
    call(&s, &h, move |svc| svc.transaction(&digest(&id)?)).await
}

async fn trace(State(s): Svc, h: HeaderMap, Path(id): Path<String>) -> Response {
    call(&s, &h, move |svc| svc.trace(&digest(&id)?)).await
}

async fn latency(State(s): Svc, h: HeaderMap, Path(id): Path<String>) -> Response {
    call(&s, &h, move |svc| svc.latency(&digest(&id)?)).await
}

async fn verify(State(s): Svc, h: HeaderMap) -> Response {
    call(&s, &h, |svc| svc.verify()).await
}

async fn blocks(State(s): Svc, h: HeaderMap, q: Result<Query<BlockRange>, QueryRejection>) -> Response {
    call(&s, &h, move |svc| {
        let Query(r) = q.map_err(|e| NodeError::BadRequest(e.body_text()))?;
        svc.blocks(r.from, r.to)
    })
    .await
}

async fn survey(State(s): Svc, h: HeaderMap) -> Response {
    call(&s, &h, |svc| svc.survey_report().map(|report| SurveyReport { report })).await
}

async fn status(State(s): Svc, h: HeaderMap) -> Response {
    call(&s, &h, |svc| Ok(svc.status())).await
}

async fn not_found(h: HeaderMap) -> Response {
    respond::<()>(request_id(&h), Err(NodeError::NotFound("route".into())))
}

pub fn router(service: Arc<NodeService>) -> Router {
    let v1 = Router::new()
        .route("/register", post(register))
        .route("/login", post(login))
        .route("/recover", post(recover))
        .route("/tx", post(submit))
        .route("/tx/{tx_id}", get(get_tx))
        .route("/lot/{lot_id}/trace", get(trace))
        .route("/lot/{lot_id}/latency", get(latency))
        .route("/chain/verify", get(verify))
        .route("/chain/blocks", get(blocks))
        .route("/survey/report", get(survey))
        .route("/status", get(status));
    Router::new()
        .nest("/v1", v1)
        .fallback(not_found)
        .with_state(service)
}

pub async fn bind(addr: &str) -> Result<TcpListener, NodeError> {
    TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => NodeError::PortInUse(addr.to_owned()),
        _ => NodeError::Io(format!("{addr}: {e}")),
    })
}

/// Serve until `shutdown` resolves. Blocks are fsynced as they are sealed,
/// so there is nothing left to flush afterwards.
pub async fn serve(
    service: Arc<NodeService>,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), NodeError> {
    let addr = listener.local_addr().map_err(|e| NodeError::Io(e.to_string()))?;
    info!("listening on http://{addr}/v1");
    axum::serve(listener, router(Arc::clone(&service)))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| NodeError::Io(e.to_string()))?;
    info!("stopped at height {}", service.status().height);
    Ok(())
}
