use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

use aaosa_core::ManualClock;
use aaosa_mapdemo::http::router;
use aaosa_mapdemo::service::{DemoService, ServiceConfig};

fn service() -> Arc<DemoService> {
    Arc::new(
        DemoService::new(ServiceConfig { clock: Arc::new(ManualClock::new(0)), ..ServiceConfig::default() }).unwrap(),
    )
}

async fn call(svc: &Arc<DemoService>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn session(svc: &Arc<DemoService>, user: &str) -> String {
    let (status, body) = call(svc, Method::POST, "/sessions", Some(json!({"user": user}))).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn request_moves_map_and_reports_path() {
    let svc = service();
    let id = session(&svc, "u1").await;
    let (status, body) = call(
        &svc,
        Method::POST,
        &format!("/sessions/{id}/request"),
        Some(json!({"text": "shift the map to the right"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["path"], json!(["nl-input", "input-regulator", "map-view-port", "shifting"]));
    assert_eq!(body["map"]["center_x"], json!(10.0));
    assert_eq!(body["actuated"], json!({"handle": "shift-east"}));

    let (status, map) = call(&svc, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(map["map"]["center_x"], json!(10.0));
}

#[tokio::test]
async fn pointer_body_uses_wire_names() {
    let svc = service();
    let id = session(&svc, "u1").await;
    let (status, body) = call(
        &svc,
        Method::POST,
        &format!("/sessions/{id}/request"),
        Some(json!({"pointer": {"kind": "on-right-border", "x": 500.0, "y": 0.0}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["map"]["center_x"], json!(10.0));
}

#[tokio::test]
async fn error_statuses() {
    let svc = service();
    let (status, body) = call(&svc, Method::POST, "/sessions", Some(json!({"user": ""}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_user")));

    let id = session(&svc, "u1").await;
    let (status, body) = call(&svc, Method::POST, &format!("/sessions/{id}/request"), Some(json!({}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_request")));

    let (status, body) =
        call(&svc, Method::POST, &format!("/sessions/{id}/feedback"), Some(json!({"signal": -1}))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("no_prior_request")));

    let (status, _) = call(&svc, Method::GET, "/sessions/zzz/map", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&svc, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = call(&svc, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::GONE, Some("session_closed")));
}

#[tokio::test]
async fn feedback_summary_names_learned_pattern() {
    let svc = service();
    let id = session(&svc, "u1").await;
    call(&svc, Method::POST, &format!("/sessions/{id}/request"), Some(json!({"text": "shift the view to the right"})))
        .await;
    let (status, body) =
        call(&svc, Method::POST, &format!("/sessions/{id}/feedback"), Some(json!({"signal": -1}))).await;
    assert_eq!(status, StatusCode::OK);
    let learned: Vec<&Value> =
        body["summary"]["learning"].as_array().unwrap().iter().filter(|c| c["change"]["kind"] == "learned").collect();
    assert_eq!(learned.len(), 1);
    assert_eq!(learned[0]["agent"], "map-view-port");
    assert_eq!(learned[0]["change"]["tokens"], json!(["view"]));

    let (status, text_fb) =
        call(&svc, Method::POST, &format!("/sessions/{id}/feedback"), Some(json!({"signal": "thanks"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(text_fb["summary"]["rewards"].as_array().unwrap().is_empty());

    let (status, agents) = call(&svc, Method::GET, "/agents", None).await;
    assert_eq!(status, StatusCode::OK);
    let agents = agents.as_array().unwrap();
    assert_eq!(agents.len(), 14);
    let vp = agents.iter().find(|a| a["name"] == "map-view-port").unwrap();
    assert_eq!(vp["learned_patterns"], json!(1));
}

#[tokio::test]
async fn websocket_streams_events_in_order() {
    let svc = service();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(aaosa_mapdemo::http::serve(listener, svc.clone()));

    let id = svc.create_session("u1").unwrap().session_id;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/events")).await.unwrap();

    let client_svc = svc.clone();
    let req_id = id.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        client_svc
            .submit_request(
                &req_id,
                aaosa_mapdemo::service::RequestBody { text: Some("shift the map to the right".into()), pointer: None },
            )
            .unwrap()
    })
    .await
    .unwrap();

    let mut traced = Vec::new();
    let mut last_seq = None;
    loop {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        let Message::Text(text) = msg else { continue };
        let event: Value = serde_json::from_str(&text).unwrap();
        let seq = event["seq"].as_u64().unwrap();
        assert_eq!(last_seq.map_or(0, |s: u64| s + 1), seq);
        last_seq = Some(seq);
        match event["type"].as_str().unwrap() {
            "trace" => traced.push(event["event"].clone()),
            "map" => {
                assert_eq!(event["map"]["center_x"], json!(10.0));
                break;
            }
            _ => {}
        }
    }
    let expected: Vec<Value> = outcome.trace.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    assert_eq!(traced, expected);

    svc.close_session(&id).unwrap();
    let rest = tokio::time::timeout(std::time::Duration::from_secs(5), ws.next()).await.unwrap();
    assert!(matches!(rest, None | Some(Ok(Message::Close(_))) | Some(Err(_))));

    let err = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/events")).await;
    assert!(err.is_err());
}
