//! HTTP endpoints and the websocket event stream.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/v1/sessions` | `CreateRequest` / `CreateResponse` |
//! | POST | `/v1/sessions/{id}/commands` | `CommandRequest` / `Ack` |
//! | GET | `/v1/sessions/{id}/state` | `StateResponse` |
//! | GET | `/v1/sessions/{id}/events?since=N` | `EventsResponse` |
//! | GET | `/v1/sessions/{id}/subscribe?since=N` | websocket |
//!
//! Over the websocket the server sends `{"type":"event","event":{..}}` for
//! every event from `since` on, and answers each `CommandRequest` text
//! frame with `{"type":"ack",..}` or `{"type":"error",..}`.

use crate::protocol::*;
use crate::session::{Session, SessionError};
use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::{broadcast, Mutex, RwLock};

const EVENT_BUFFER: usize = 1024;

pub struct SessionHandle {
    session: Mutex<Session>,
    events: broadcast::Sender<SessionEvent>,
}

impl SessionHandle {
    /// Applies a command and publishes its events while still holding the
    /// session lock, so subscribers see them in sequence order.
    pub async fn submit(&self, command: &Command) -> Result<Vec<SessionEvent>, SessionError> {
        let mut session = self.session.lock().await;
        let events = session.apply(command)?;
        for e in &events {
            let _ = self.events.send(e.clone());
        }
        Ok(events)
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub async fn create(&self, config: SessionConfig) -> Result<(String, Session), SessionError> {
        let session = Session::new(config)?;
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        let (tx, _) = broadcast::channel(EVENT_BUFFER);
        let copy = session.clone();
        self.sessions.write().await.insert(
            id.clone(),
            Arc::new(SessionHandle {
                session: Mutex::new(session),
                events: tx,
            }),
        );
        Ok((id, copy))
    }

    pub async fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.read().await.get(id).cloned()
    }

    /// Advances every session's clock by `dt` simulated seconds.
    pub async fn tick(&self, dt: f64) {
        let handles: Vec<Arc<SessionHandle>> = self.sessions.read().await.values().cloned().collect();
        for h in handles {
            let _ = h.submit(&Command::Advance { seconds: dt }).await;
        }
    }

    /// Drives the simulated clocks from the wall clock.
    pub fn spawn_clock(self: &Arc<Self>, period: Duration) -> tokio::task::JoinHandle<()> {
        let state = Arc::clone(self);
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.tick().await;
            loop {
                interval.tick().await;
                state.tick(period.as_secs_f64()).await;
            }
        })
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ErrorResponse {
        version: PROTOCOL_VERSION,
        error: ErrorBody {
            code: code.to_owned(),
            message: message.into(),
        },
    };
    (status, Json(body)).into_response()
}

fn unknown_session(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, "unknownSession", format!("unknown session `{id}`"))
}

/// Parses a versioned request body, reporting version mismatches before
/// shape errors.
pub fn parse_versioned<T: DeserializeOwned>(body: &[u8]) -> Result<T, (String, String)> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| ("protocol".to_owned(), format!("malformed JSON: {e}")))?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err((
                "unsupportedVersion".to_owned(),
                format!("protocol version {v} is not supported (server speaks {PROTOCOL_VERSION})"),
            ))
        }
        None => return Err(("protocol".to_owned(), "missing protocol version".to_owned())),
    }
    serde_json::from_value(value).map_err(|e| ("protocol".to_owned(), e.to_string()))
}

fn session_error(e: SessionError) -> (StatusCode, &'static str, String) {
    match e {
        SessionError::InvalidConfig(m) => (StatusCode::BAD_REQUEST, "invalidConfig", m),
        SessionError::Rejected(m) => (StatusCode::CONFLICT, "rejected", m),
        SessionError::System(e) => (StatusCode::UNPROCESSABLE_ENTITY, "system", e.to_string()),
    }
}

async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: CreateRequest = match parse_versioned(&body) {
        Ok(r) => r,
        Err((code, m)) => return error(StatusCode::BAD_REQUEST, &code, m),
    };
    match state.create(req.config).await {
        Ok((id, session)) => {
            let snapshot = match session.snapshot() {
                Ok(s) => s,
                Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "system", e.to_string()),
            };
            Json(CreateResponse {
                version: PROTOCOL_VERSION,
                session_id: id,
                time: session.time(),
                snapshot,
            })
            .into_response()
        }
        Err(e) => {
            let (status, code, m) = session_error(e);
            error(status, code, m)
        }
    }
}

async fn command(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(handle) = state.get(&id).await else { return unknown_session(&id) };
    let req: CommandRequest = match parse_versioned(&body) {
        Ok(r) => r,
        Err((code, m)) => return error(StatusCode::BAD_REQUEST, &code, m),
    };
    let (status, ack) = run_command(&handle, &req.command).await;
    (status, Json(ack)).into_response()
}

async fn run_command(handle: &SessionHandle, command: &Command) -> (StatusCode, Ack) {
    match handle.submit(command).await {
        Ok(events) => (
            StatusCode::OK,
            Ack {
                version: PROTOCOL_VERSION,
                accepted: true,
                reason: None,
                events,
            },
        ),
        Err(e) => {
            let (status, _, reason) = session_error(e);
            (
                status,
                Ack {
                    version: PROTOCOL_VERSION,
                    accepted: false,
                    reason: Some(reason),
                    events: Vec::new(),
                },
            )
        }
    }
}

async fn query(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(handle) = state.get(&id).await else { return unknown_session(&id) };
    let session = handle.session.lock().await;
    match session.snapshot() {
        Ok(snapshot) => Json(StateResponse {
            version: PROTOCOL_VERSION,
            session_id: id,
            time: session.time(),
            last_seq: session.last_seq(),
            snapshot,
            pending: session.pending(),
            task: session.task(),
        })
        .into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "system", e.to_string()),
    }
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn events(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<Since>) -> Response {
    let Some(handle) = state.get(&id).await else { return unknown_session(&id) };
    let session = handle.session.lock().await;
    Json(EventsResponse {
        version: PROTOCOL_VERSION,
        events: session.events_since(q.since).to_vec(),
    })
    .into_response()
}

async fn subscribe(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
    ws: WebSocketUpgrade,
) -> Response {
    let Some(handle) = state.get(&id).await else { return unknown_session(&id) };
    ws.on_upgrade(move |socket| stream(socket, handle, q.since))
}

fn event_frame(e: &SessionEvent) -> Message {
    Message::Text(json!({ "type": "event", "event": e }).to_string().into())
}

async fn stream(socket: WebSocket, handle: Arc<SessionHandle>, since: u64) {
    let (mut sink, mut incoming) = socket.split();
    // Subscribe and read the backlog under one lock so nothing is missed
    // or duplicated.
    let (backlog, mut rx) = {
        let session = handle.session.lock().await;
        (session.events_since(since).to_vec(), handle.events.subscribe())
    };
    let mut next = since;
    for e in &backlog {
        if sink.send(event_frame(e)).await.is_err() {
            return;
        }
        next = e.seq + 1;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(e) if e.seq < next => {}
                Ok(e) => {
                    next = e.seq + 1;
                    if sink.send(event_frame(&e)).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = handle.session.lock().await.events_since(next).to_vec();
                    for e in missed {
                        next = e.seq + 1;
                        if sink.send(event_frame(&e)).await.is_err() {
                            return;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = incoming.next() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = match parse_versioned::<CommandRequest>(text.as_bytes()) {
                    Ok(req) => {
                        let (_, ack) = run_command(&handle, &req.command).await;
                        json!({ "type": "ack", "ack": ack })
                    }
                    Err((code, message)) => json!({
                        "type": "error",
                        "error": ErrorResponse { version: PROTOCOL_VERSION, error: ErrorBody { code, message } },
                    }),
                };
                if sink.send(Message::Text(reply.to_string().into())).await.is_err() {
                    return;
                }
            }
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}/commands", post(command))
        .route("/v1/sessions/{id}/state", get(query))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/sessions/{id}/subscribe", get(subscribe))
        .with_state(state)
}

/// Serves on `addr` until the process exits. `clock` drives simulated
/// time from the wall clock at that period; `None` leaves time to
/// `advance` commands.
pub async fn serve(addr: std::net::SocketAddr, clock: Option<Duration>) -> std::io::Result<()> {
    let state = AppState::new();
    if let Some(period) = clock {
        state.spawn_clock(period);
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
