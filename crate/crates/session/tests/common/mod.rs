#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ownership_session::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct Client {
    app: Router,
}

impl Client {
    pub fn new() -> Self {
        Self {
            app: router(AppState::new()),
        }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn create(&self, config: Value) -> String {
        let (status, body) = self.call("POST", "/v1/sessions", Some(json!({"version": 1, "config": config}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["sessionId"].as_str().unwrap().to_owned()
    }

    pub async fn command(&self, id: &str, command: Value) -> (StatusCode, Value) {
        self.call(
            "POST",
            &format!("/v1/sessions/{id}/commands"),
            Some(json!({"version": 1, "command": command})),
        )
        .await
    }

    pub async fn ok(&self, id: &str, command: Value) -> Vec<Value> {
        let (status, ack) = self.command(id, command).await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        assert_eq!(ack["accepted"], true);
        ack["events"].as_array().unwrap().clone()
    }

    pub async fn state(&self, id: &str) -> Value {
        let (status, body) = self.call("GET", &format!("/v1/sessions/{id}/state"), None).await;
        assert_eq!(status, StatusCode::OK);
        body
    }
}

/// The breakroom of the teaching scenario: Xuan's wallet and mug near
/// each other, two unowned items by the bin.
pub fn breakroom() -> Value {
    json!({
        "world": {
            "kind": "custom",
            "agents": ["xuan", "jake"],
            "clock": 1000.0,
            "objects": [
                {"id": "o1", "position": [-1.0, -1.0, 0.0], "color": "yellow"},
                {"id": "o2", "position": [1.0, 1.0, 0.0], "color": "red", "lastInteraction": {"xuan": 990.0}},
                {"id": "o3", "position": [1.1, 0.9, 0.0], "color": "red", "lastInteraction": {"xuan": 995.0}},
                {"id": "o4", "position": [-1.1, -0.9, 0.0], "color": "green"}
            ],
            "claims": [{"object": "o1", "agent": "xuan", "probability": 0.0}]
        },
        "announceWindow": 2.0
    })
}

pub fn kinds(events: &[Value]) -> Vec<String> {
    events.iter().map(|e| e["kind"].as_str().unwrap().to_owned()).collect()
}
