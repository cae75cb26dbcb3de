mod common;

use axum::http::StatusCode;
use common::*;
use ownership_session::{apply_event, SessionEvent, WorldSnapshot};
use serde_json::{json, Value};

fn status_of(state: &Value, object: &str) -> String {
    state["snapshot"]["objects"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["id"] == object)
        .unwrap()["status"]
        .as_str()
        .unwrap()
        .to_owned()
}

#[tokio::test]
async fn halted_mid_action_then_refusal_then_exclusive_claim() {
    let c = Client::new();
    let id = c.create(breakroom()).await;

    let ev = c.ok(&id, json!({"type": "startTask", "task": "trashAll"})).await;
    assert_eq!(kinds(&ev), ["actionAnnounced"]);
    assert_eq!(ev[0]["payload"]["object"], "o1");
    assert_eq!(ev[0]["payload"]["windowClosesAt"], 1002.0);

    let ev = c.ok(&id, json!({"type": "advance", "seconds": 2.0})).await;
    assert_eq!(kinds(&ev), ["actionExecuted", "actionAnnounced"]);
    assert_eq!(ev[1]["payload"]["object"], "o2");

    // "No, that's mine!" during the window.
    let halted = c
        .ok(
            &id,
            json!({"type": "interrupt", "instruction": {
                "claims": [{"object": "o2", "agent": "xuan", "probability": 1.0}],
                "permission": {"action": "trash", "object": "o2", "polarity": "forbid"},
                "rule": "forbid trash if ownedBy xuan",
                "source": "xuan"
            }}),
        )
        .await;
    let k = kinds(&halted);
    assert_eq!(&k[..4], ["mistakeCorrected", "actionRefused", "ruleLearned", "ownershipUpdated"]);
    assert_eq!(halted[1]["payload"]["reason"], "interrupted");
    assert_eq!(halted[2]["payload"]["added"], json!(["forbid trash if ownedBy xuan"]));

    let ev = c.ok(&id, json!({"type": "advance", "seconds": 60.0})).await;
    let done = ev.iter().find(|e| e["kind"] == "taskDone").expect("task finished");
    assert_eq!(done["payload"]["mistakes"], 1);
    assert_eq!(done["payload"]["executed"], json!(["o1", "o4"]));
    assert_eq!(done["payload"]["refused"], json!(["o2", "o3"]));
    let refusal = halted
        .iter()
        .chain(&ev)
        .find(|e| e["kind"] == "actionRefused" && e["payload"]["object"] == "o3")
        .unwrap();
    assert_eq!(refusal["payload"]["violated"], json!(["forbid trash if ownedBy xuan"]));

    let state = c.state(&id).await;
    assert_eq!(state["snapshot"]["rules"], json!(["forbid trash if ownedBy xuan"]));
    assert_eq!(status_of(&state, "o2"), "present");
    assert_eq!(status_of(&state, "o3"), "present");
    assert_eq!(status_of(&state, "o4"), "trashed");

    // Another user asks for the wallet to be thrown away.
    let ev = c
        .ok(&id, json!({"type": "requestAction", "action": "trash", "object": "o2", "requestedBy": "jake"}))
        .await;
    assert_eq!(kinds(&ev), ["actionAnnounced", "actionRefused"]);
    let violated = ev[1]["payload"]["violated"].as_array().unwrap();
    assert!(violated.contains(&json!("permission forbid trash o2")));
    assert!(ev[1]["payload"]["message"].as_str().unwrap().starts_with("Sorry"));

    // Exclusive counter-claim, then the same request goes through.
    let ev = c
        .ok(
            &id,
            json!({"type": "instruct", "instruction": {
                "claims": [{"object": "o2", "agent": "jake", "probability": 1.0, "exclusive": true}],
                "source": "jake"
            }}),
        )
        .await;
    let update = ev.iter().find(|e| e["kind"] == "ownershipUpdated").unwrap();
    assert_eq!(update["payload"]["revoked"], 1);
    let ev = c
        .ok(&id, json!({"type": "requestAction", "action": "trash", "object": "o2", "requestedBy": "jake"}))
        .await;
    assert_eq!(kinds(&ev), ["actionAnnounced"]);
    assert_eq!(ev[0]["payload"]["intent"], "execute");
    let ev = c.ok(&id, json!({"type": "advance", "seconds": 2.0})).await;
    assert_eq!(kinds(&ev), ["actionExecuted"]);
    assert_eq!(status_of(&c.state(&id).await, "o2"), "trashed");

    // The event log replays to the queried state.
    let (_, log) = c.call("GET", &format!("/v1/sessions/{id}/events"), None).await;
    let events: Vec<SessionEvent> = serde_json::from_value(log["events"].clone()).unwrap();
    let mut replayed = None;
    for e in &events {
        apply_event(&mut replayed, e);
    }
    let queried: WorldSnapshot = serde_json::from_value(c.state(&id).await["snapshot"].clone()).unwrap();
    assert_eq!(replayed.unwrap(), queried);
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
}

#[tokio::test]
async fn interrupt_after_execution_is_a_correction() {
    let c = Client::new();
    let mut config = breakroom();
    config["announceWindow"] = json!(0.0);
    let id = c.create(config).await;
    c.ok(&id, json!({"type": "startTask", "task": "trashAll"})).await;
    let (status, ack) = c
        .command(&id, json!({"type": "interrupt", "instruction": {"claims": [{"object": "o2", "agent": "xuan", "probability": 1.0}]}}))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(ack["accepted"], false);
    assert_eq!(ack["reason"], "no announce window is open");
    let ev = c
        .ok(
            &id,
            json!({"type": "instruct", "instruction": {"permission": {"action": "trash", "object": "o2", "polarity": "forbid"}}}),
        )
        .await;
    assert_eq!(ev[0]["kind"], "mistakeCorrected");
    assert_eq!(ev[0]["payload"]["phase"], "afterExecution");
}

#[tokio::test]
async fn announcements_precede_outcomes() {
    let c = Client::new();
    let id = c.create(json!({"world": {"kind": "simulated", "seed": 4}})).await;
    c.ok(&id, json!({"type": "startTask", "task": "collectAll"})).await;
    for _ in 0..25 {
        c.ok(&id, json!({"type": "advance", "seconds": 2.0})).await;
    }
    let (_, log) = c.call("GET", &format!("/v1/sessions/{id}/events"), None).await;
    let mut open: Option<String> = None;
    for e in log["events"].as_array().unwrap() {
        match e["kind"].as_str().unwrap() {
            "actionAnnounced" => {
                assert!(open.is_none());
                open = Some(e["payload"]["object"].as_str().unwrap().to_owned());
            }
            "actionExecuted" | "actionRefused" => {
                assert_eq!(open.take().as_deref(), e["payload"]["object"].as_str());
            }
            _ => {}
        }
    }
    assert!(log["events"].as_array().unwrap().iter().any(|e| e["kind"] == "taskDone"));
}

#[tokio::test]
async fn protocol_errors_never_crash() {
    let c = Client::new();
    let (status, body) = c.call("POST", "/v1/sessions", Some(json!({"version": 2}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "unsupportedVersion");
    let (status, body) = c
        .call("POST", "/v1/sessions", Some(json!({"version": 1, "config": {"world": {"kind": "simulated", "agents": 0}}})))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalidConfig");

    let id = c.create(json!({})).await;
    let (status, body) = c.command(&id, json!({"type": "dance"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "protocol");
    let (status, _) = c.command(&id, json!({"type": "advance", "seconds": 1.0, "extra": true})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = c.call("POST", &format!("/v1/sessions/{id}/commands"), Some(json!("not an object"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = c.command("nope", json!({"type": "advance", "seconds": 1.0})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknownSession");
    let (status, _) = c.call("GET", "/v1/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, ack) = c.command(&id, json!({"type": "requestAction", "action": "juggle", "object": "o01"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(ack["reason"], "unknown action `juggle`");
}

#[tokio::test]
async fn state_reports_rules_and_posteriors() {
    let c = Client::new();
    let id = c.create(breakroom()).await;
    c.ok(&id, json!({"type": "instruct", "instruction": {"rule": "forbid trash if ownedBy any"}})).await;
    let state = c.state(&id).await;
    assert_eq!(state["snapshot"]["rules"], json!(["forbid trash if ownedBy any"]));
    assert!(state["snapshot"]["conflictFraction"].is_number());
    let entries = state["snapshot"]["ownership"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    let o1 = entries.iter().find(|e| e["object"] == "o1" && e["agent"] == "xuan").unwrap();
    assert_eq!(o1["posterior"], 0.0);
    assert_eq!(o1["claimed"], true);
}
