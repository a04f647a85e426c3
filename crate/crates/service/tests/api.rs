use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use recshape_core::pipeline::ModelSet;
use recshape_service::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

fn store() -> Arc<Store> {
    let mut sets = BTreeMap::new();
    sets.insert("toy".to_string(), Arc::new(ModelSet::toy(7).unwrap()));
    Arc::new(Store::new(sets))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn new_session(app: &Router, seed: u64) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({"model_set": "toy", "seed": seed}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn phrase_step_undo_cycle() {
    let app = router(store(), None);
    let id = new_session(&app, 3).await;

    let (s, step1) = call(&app, "POST", &format!("/sessions/{id}/phrases"), Some(json!({"text": "a chair", "n_samples": 3}))).await;
    assert_eq!(s, StatusCode::OK, "{step1}");
    assert_eq!(step1["step"], 1);
    assert_eq!(step1["sample_refs"].as_array().unwrap().len(), 3);
    assert!(step1["mean_entropy"].as_f64().unwrap() > 0.0);

    let (_, step2) = call(&app, "POST", &format!("/sessions/{id}/phrases"), Some(json!({"text": "with armrests", "n_samples": 3}))).await;
    assert_eq!(step2["step"], 2);

    let (s, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(state["t"], 2);
    assert_eq!(state["phrases"], json!(["a chair", "with armrests"]));
    assert_eq!(state["steps"].as_array().unwrap().len(), 2);
    assert_eq!(state["steps"][1]["mean_entropy"], step2["mean_entropy"]);

    let (s, undone) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(undone["t"], 1);

    // Replaying the same phrase reproduces the same step.
    let (_, again) = call(&app, "POST", &format!("/sessions/{id}/phrases"), Some(json!({"text": "with armrests", "n_samples": 3}))).await;
    assert_eq!(again, step2);

    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    let (s, err) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(err["error"].is_string());
}

#[tokio::test]
async fn samples_in_both_formats_and_reseed() {
    let app = router(store(), None);
    let id = new_session(&app, 5).await;
    call(&app, "POST", &format!("/sessions/{id}/phrases"), Some(json!({"text": "a table", "n_samples": 2}))).await;

    let (s, vox) = call(&app, "GET", &format!("/sessions/{id}/steps/1/samples?format=voxels&n=2"), None).await;
    assert_eq!(s, StatusCode::OK, "{vox}");
    assert_eq!(vox["format"], "voxels");
    assert_eq!(vox["resolution"], 8);
    assert_eq!(vox["samples"].as_array().unwrap().len(), 2);
    for p in vox["samples"][0]["occupied"].as_array().unwrap() {
        assert!(p.as_array().unwrap().iter().all(|c| c.as_u64().unwrap() < 8));
    }

    let (s, mesh) = call(&app, "GET", &format!("/sessions/{id}/steps/1/samples?format=mesh&n=2"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(mesh["samples"][0]["ref"], vox["samples"][0]["ref"]);
    assert!(mesh["samples"][0]["obj"].is_string());

    let uri = format!("/sessions/{id}/steps/1/samples?seed=99&n=4");
    let (_, a) = call(&app, "GET", &uri, None).await;
    let (_, b) = call(&app, "GET", &uri, None).await;
    assert_eq!(a, b);
    assert_eq!(a["seed"], 99);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["t"], 1, "reseeding must not advance the session");
}

#[tokio::test]
async fn error_statuses() {
    let app = router(store(), None);
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({"model_set": "nope", "seed": 1}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/sessions/missing/state", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = new_session(&app, 1).await;
    let phrases = format!("/sessions/{id}/phrases");
    let (s, _) = call(&app, "POST", &phrases, Some(json!({"text": "", "n_samples": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &phrases, Some(json!({"text": "x".repeat(1025), "n_samples": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &phrases, Some(json!({"text": "a chair", "n_samples": 17}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &phrases, Some(json!({"text": "a chair", "n_samples": 0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/steps/1/samples"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "no step 1 yet");
    call(&app, "POST", &phrases, Some(json!({"text": "a chair", "n_samples": 1}))).await;
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/steps/1/samples?format=png"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/steps/0/samples"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn snapshot_restores_identical_session() {
    let store = store();
    let app = router(store.clone(), None);
    let id = new_session(&app, 11).await;
    for p in ["a chair", "with a tall back"] {
        call(&app, "POST", &format!("/sessions/{id}/phrases"), Some(json!({"text": p, "n_samples": 2}))).await;
    }
    let (_, snap) = call(&app, "GET", &format!("/sessions/{id}/snapshot"), None).await;
    let (_, samples) = call(&app, "GET", &format!("/sessions/{id}/steps/2/samples"), None).await;

    let fresh = router(self::store(), None);
    let (s, created) = call(&fresh, "POST", "/sessions/restore", Some(snap.clone())).await;
    assert_eq!(s, StatusCode::OK, "{created}");
    assert_eq!(created["id"], json!(id));
    let (_, restored) = call(&fresh, "GET", &format!("/sessions/{id}/steps/2/samples"), None).await;
    assert_eq!(restored, samples);
    let (_, resnap) = call(&fresh, "GET", &format!("/sessions/{id}/snapshot"), None).await;
    assert_eq!(resnap, snap);

    let mut tampered = snap.clone();
    tampered["phrases"][1] = json!("with a short back");
    let (s, _) = call(&fresh, "POST", "/sessions/restore", Some(tampered)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "replayed Z must match the recorded Z");
}

#[tokio::test]
async fn lists_model_sets_and_serves_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(store(), Some(dir.path()));
    let (s, sets) = call(&app, "GET", "/model-sets", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sets, json!(["toy"]));
    let (s, page) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page, json!("<html>ui</html>"));
}

#[test]
fn model_sets_load_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let set = ModelSet::toy(2).unwrap();
    set.save(&dir.path().join("alpha")).unwrap();
    set.save(&dir.path().join("beta")).unwrap();
    let loaded = recshape_service::load_model_sets(dir.path()).unwrap();
    assert_eq!(loaded.keys().collect::<Vec<_>>(), vec!["alpha", "beta"]);
    assert_eq!(*loaded["alpha"], set);
    let single = recshape_service::load_model_sets(&dir.path().join("alpha")).unwrap();
    assert!(single.contains_key("default"));
    assert!(recshape_service::load_model_sets(&dir.path().join("alpha/..x")).is_err());
}
