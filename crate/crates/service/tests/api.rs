use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bishop_core::resolution::Engine;
use bishop_service::{router, AppState, SceneView, DEFAULT_IDLE_EXPIRY};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (AppState, Router) {
    let state = AppState::new(Engine::packaged(), DEFAULT_IDLE_EXPIRY);
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router, body: Value) -> (String, SceneView) {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    (
        v["id"].as_str().unwrap().to_string(),
        serde_json::from_value(v["scene"].clone()).unwrap(),
    )
}

fn centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let n = poly.len() as f64;
    [
        poly.iter().map(|p| p[0]).sum::<f64>() / n,
        poly.iter().map(|p| p[1]).sum::<f64>() / n,
    ]
}

#[tokio::test]
async fn healthz_is_ok() {
    let (_, app) = app();
    let (status, v) = call(&app, "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn default_session_has_thirty_objects() {
    let (_, app) = app();
    let (status, v) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["scene"]["objects"].as_array().unwrap().len(), 30);
    let (_, view) = create(&app, json!({})).await;
    assert_eq!(view.objects.len(), 30);
    assert!(view
        .objects
        .iter()
        .all(|o| o.polygon.len() == 3 && o.colour.starts_with('#')));
}

#[tokio::test]
async fn explicit_seed_is_reproducible() {
    let (_, app) = app();
    let (a, va) = create(&app, json!({"seed": 42, "objects": 12})).await;
    let (b, vb) = create(&app, json!({"seed": 42, "objects": 12})).await;
    assert_ne!(a, b);
    assert_eq!(va, vb);
}

#[tokio::test]
async fn zero_objects_is_rejected() {
    let (_, app) = app();
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"objects": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "invalid_objects");
    assert!(v["message"].is_string());
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let (_, app) = app();
    for (method, uri, body) in [
        ("GET", "/sessions/nope/scene", None),
        (
            "POST",
            "/sessions/nope/utterance",
            Some(json!({"text": "the green one"})),
        ),
        ("POST", "/sessions/nope/confirm", Some(json!({"correct": true}))),
    ] {
        let (status, v) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(v["code"], "session_not_found");
    }
}

#[tokio::test]
async fn leftmost_green_matches_scene_view() {
    let (_, app) = app();
    let (id, view) = create(&app, json!({"seed": 7})).await;
    let (status, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/utterance"),
        Some(json!({"text": "the leftmost green cone"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    // Independent oracle: smallest polygon-centroid x among green display colours.
    let expected = view
        .objects
        .iter()
        .filter(|o| o.colour == "#3caa46")
        .min_by(|a, b| centroid(&a.polygon)[0].total_cmp(&centroid(&b.polygon)[0]))
        .unwrap()
        .id;
    assert_eq!(v["chosen"], json!(expected.0));
    assert_eq!(v["consistency"], "Consistent");
    assert!(v["candidates"].as_array().is_some_and(|c| !c.is_empty()));
}

#[tokio::test]
async fn resubmission_replaces_pending_entry() {
    let (_, app) = app();
    let (id, _) = create(&app, json!({"seed": 3, "objects": 10})).await;
    let uri = format!("/sessions/{id}/utterance");
    call(&app, "POST", &uri, Some(json!({"text": "the leftmost one"}))).await;
    call(&app, "POST", &uri, Some(json!({"text": "the rightmost one"}))).await;
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}/scene"), None).await;
    let t = v["transcript"].as_array().unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0]["utterance"], "the rightmost one");
    assert_eq!(t[0]["outcome"], "pending");
}

#[tokio::test]
async fn confirm_flow_and_anaphora() {
    let (_, app) = app();
    let (id, before) = create(&app, json!({"seed": 11, "objects": 8})).await;
    let utter = format!("/sessions/{id}/utterance");
    let confirm = format!("/sessions/{id}/confirm");

    let (status, v) = call(&app, "POST", &confirm, Some(json!({"correct": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "no_pending_selection");

    let (_, v) = call(&app, "POST", &utter, Some(json!({"text": "the frontmost one"}))).await;
    let chosen = v["chosen"].as_u64().unwrap();
    let (status, v) = call(&app, "POST", &confirm, Some(json!({"correct": false}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<SceneView>(v["scene"].clone()).unwrap(), before);
    assert_eq!(v["score"], json!({"correct": 0, "attempts": 1}));

    call(&app, "POST", &utter, Some(json!({"text": "the frontmost one"}))).await;
    let (status, v) = call(&app, "POST", &confirm, Some(json!({"correct": true, "target": 99}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "target_not_in_scene");
    let (status, v) = call(&app, "POST", &confirm, Some(json!({"correct": true, "target": chosen}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["removed"], json!(chosen));
    assert_eq!(v["score"], json!({"correct": 1, "attempts": 2}));
    let after: SceneView = serde_json::from_value(v["scene"].clone()).unwrap();
    assert_eq!(after.objects.len(), 7);
    assert!(after.objects.iter().all(|o| u64::from(o.id.0) != chosen));

    // The removed object is the anaphoric antecedent: the object straight
    // behind it in the old scene is what "the one behind that one" finds,
    // and that can never be the removed object itself.
    let (_, v) = call(&app, "POST", &utter, Some(json!({"text": "the one behind that one"}))).await;
    assert!(v["chosen"].as_u64().is_some_and(|c| c != chosen), "{v}");
}

#[tokio::test]
async fn session_terminates_after_all_objects_removed() {
    let (_, app) = app();
    let (id, _) = create(&app, json!({"seed": 5, "objects": 3})).await;
    for _ in 0..3 {
        let (_, v) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/utterance"),
            Some(json!({"text": "the leftmost one"})),
        )
        .await;
        assert!(v["chosen"].is_u64());
        let (status, _) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/confirm"),
            Some(json!({"correct": true})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/utterance"),
        Some(json!({"text": "the leftmost one"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "scene_empty");
}

#[tokio::test]
async fn concurrent_requests_on_one_session_are_serialised() {
    let (_, app) = app();
    let (id, _) = create(&app, json!({"seed": 8, "objects": 30})).await;
    let mut handles = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        let id = id.clone();
        handles.push(tokio::spawn(async move {
            let text = if i % 2 == 0 {
                "the leftmost one"
            } else {
                "the rightmost one"
            };
            call(
                &app,
                "POST",
                &format!("/sessions/{id}/utterance"),
                Some(json!({"text": text})),
            )
            .await
            .0
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}/scene"), None).await;
    assert_eq!(v["transcript"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::new(Engine::packaged(), Duration::from_secs(60));
    let app = router(state.clone());
    create(&app, json!({"seed": 1, "objects": 2})).await;
    assert_eq!(state.sweep_expired(Instant::now()).await, 0);
    assert_eq!(state.sweep_expired(Instant::now() + Duration::from_secs(61)).await, 1);
    assert_eq!(state.session_count().await, 0);
}

#[tokio::test]
async fn cors_headers_present() {
    let (_, app) = app();
    let req = Request::builder()
        .method("GET")
        .uri("/healthz")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
