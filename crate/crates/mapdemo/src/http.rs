//! HTTP and WebSocket front end for [`DemoService`].

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use aaosa_core::RouterError;

use crate::driver::{DemoError, FeedbackSignal};
use crate::service::{DemoService, RequestBody, ServiceError, ServiceEvent};

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub user: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackBody {
    pub signal: FeedbackSignal,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ServiceError::SessionClosed(_) => (StatusCode::GONE, "session_closed"),
            ServiceError::Demo(DemoError::BadUser) => (StatusCode::BAD_REQUEST, "bad_user"),
            ServiceError::Demo(DemoError::EmptyRequest) => (StatusCode::BAD_REQUEST, "empty_request"),
            ServiceError::Demo(DemoError::NoPriorRequest) => (StatusCode::CONFLICT, "no_prior_request"),
            ServiceError::Demo(DemoError::Message(_)) => (StatusCode::BAD_REQUEST, "malformed"),
            ServiceError::Demo(DemoError::Router(RouterError::StepBudgetExceeded(_))) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "step_budget_exceeded")
            }
            ServiceError::Demo(DemoError::Router(_)) => (StatusCode::INTERNAL_SERVER_ERROR, "router"),
            ServiceError::Snapshot(_) => (StatusCode::INTERNAL_SERVER_ERROR, "snapshot"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        let body = ErrorBody { error: code.to_string(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

type Shared = State<Arc<DemoService>>;

async fn create_session(State(s): Shared, Json(body): Json<CreateSession>) -> Result<impl IntoResponse, ApiError> {
    Ok((StatusCode::CREATED, Json(s.create_session(&body.user)?)))
}

async fn submit_request(
    State(s): Shared,
    Path(id): Path<String>,
    Json(body): Json<RequestBody>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.submit_request(&id, body)?))
}

async fn submit_feedback(
    State(s): Shared,
    Path(id): Path<String>,
    Json(body): Json<FeedbackBody>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.submit_feedback(&id, body.signal)?))
}

async fn map(State(s): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.map(&id)?))
}

async fn close(State(s): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    s.close_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn agents(State(s): Shared) -> impl IntoResponse {
    Json(s.agents())
}

async fn events(State(s): Shared, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let (backlog, rx) = s.stream_events(&id)?;
    Ok(ws.on_upgrade(move |socket| pump(socket, backlog, rx)))
}

fn frame(e: &ServiceEvent) -> Message {
    Message::Text(serde_json::to_string(e).expect("events serialize").into())
}

async fn pump(
    mut socket: WebSocket,
    backlog: Vec<ServiceEvent>,
    mut rx: tokio::sync::broadcast::Receiver<ServiceEvent>,
) {
    let mut next_seq = 0;
    for e in &backlog {
        if socket.send(frame(e)).await.is_err() {
            return;
        }
        next_seq = e.seq + 1;
    }
    loop {
        match rx.recv().await {
            Ok(e) if e.seq < next_seq => {}
            Ok(e) => {
                next_seq = e.seq + 1;
                if socket.send(frame(&e)).await.is_err() {
                    return;
                }
            }
            Err(RecvError::Lagged(_)) => {}
            Err(RecvError::Closed) => {
                let _ = socket.send(Message::Close(None)).await;
                return;
            }
        }
    }
}

pub fn router(service: Arc<DemoService>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(close))
        .route("/sessions/{id}/request", post(submit_request))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/map", get(map))
        .route("/sessions/{id}/events", get(events))
        .route("/agents", get(agents))
        .with_state(service)
}

pub async fn serve(listener: tokio::net::TcpListener, service: Arc<DemoService>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
