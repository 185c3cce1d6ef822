use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use topocam::fixtures;
use topocam::mesh::write_stl_binary;
use topocam::server::{router, AppState};
use topocam::session::{SessionConfig, SessionStore};

fn stl(soup: fixtures::Soup) -> Vec<u8> {
    let mut out = Vec::new();
    write_stl_binary(&soup.mesh(), &mut out).unwrap();
    out
}

struct Api {
    app: axum::Router,
    _dir: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = router(AppState::new(SessionStore::new(dir.path()), SessionConfig::default()));
        Api { app, _dir: dir }
    }

    async fn call(&self, method: &str, uri: &str, body: Body, json_body: bool) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if json_body {
            req = req.header("content-type", "application/json");
        }
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, Body::empty(), false).await
    }

    async fn post_json(&self, uri: &str, v: &Value) -> (StatusCode, Value) {
        self.call("POST", uri, Body::from(v.to_string()), true).await
    }

    async fn create(&self, bytes: Vec<u8>) -> String {
        let (status, v) = self.call("POST", "/sessions", Body::from(bytes), false).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        assert_eq!(v["schema_version"], 1);
        v["id"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn pocket_session_runs_to_the_end() {
    let api = Api::new();
    let id = api.create(stl(fixtures::pocket_plate().soup())).await;
    let (status, state) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["phase"], "PrimaryGraph");
    let (status, state) = api.call("POST", &format!("/sessions/{id}/advance"), Body::empty(), false).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["phase"], "Finalized");
    assert_eq!(state["macros"], json!(["parting-surface-1", "cavity-1"]));
    let (_, q) = api.get(&format!("/sessions/{id}/queries")).await;
    assert_eq!(q["queries"], json!([]));
    let (status, g) = api.get(&format!("/sessions/{id}/graph")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(g["final_graph"]["nodes"].as_array().unwrap().len(), 2);
    let (status, m) = api.get(&format!("/sessions/{id}/mesh")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["faces"].as_array().unwrap().len(), m["face_features"].as_array().unwrap().len());
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let api = Api::new();
    for uri in ["/sessions/nope", "/sessions/nope/queries", "/sessions/nope/graph", "/sessions/nope/mesh"] {
        assert_eq!(api.get(uri).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, v) = api.post_json("/sessions/nope/decisions", &json!({"from": "cavity-1", "to": "cavity-2", "kind": null})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
}

#[tokio::test]
async fn bad_uploads_and_setups_are_rejected() {
    let api = Api::new();
    let (status, v) = api.call("POST", "/sessions", Body::from("not an stl"), false).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (status, _) = api.call("POST", "/sessions?theta_bottom=70&theta_flank=60", Body::from(stl(fixtures::pocket_plate().soup())), false).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn overrides_before_the_end_conflict() {
    let api = Api::new();
    let id = api.create(stl(fixtures::pocket_plate().soup())).await;
    let ov = json!({"from": "parting-surface-1", "to": "cavity-1", "kind": "OpensOnto"});
    let (status, v) = api.post_json(&format!("/sessions/{id}/decisions"), &ov).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
    api.call("POST", &format!("/sessions/{id}/advance"), Body::empty(), false).await;
    let (status, _) = api.post_json(&format!("/sessions/{id}/decisions"), &ov).await;
    assert_eq!(status, StatusCode::OK);
    let (_, g) = api.get(&format!("/sessions/{id}/graph")).await;
    assert_eq!(g["final_graph"]["edges"][0]["kind"], "OpensOnto");
    assert_eq!(g["final_graph"]["edges"][0]["overridden"], true);
    let (status, _) = api.post_json(&format!("/sessions/{id}/decisions"), &json!({"bogus": 1})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn die_session_queries_and_decisions() {
    let api = Api::new();
    let id = api.create(stl(fixtures::die_soup())).await;
    let (_, state) = api.call("POST", &format!("/sessions/{id}/advance"), Body::empty(), false).await;
    assert_eq!(state["phase"], "AwaitingDecision");
    let (_, q) = api.get(&format!("/sessions/{id}/queries")).await;
    assert_eq!(q["queries"][0]["id"], "query-transition-2");

    let (_, g) = api.get(&format!("/sessions/{id}/graph")).await;
    assert!(!g["graph"]["hidden"].as_array().unwrap().is_empty());
    assert!(g.get("final_graph").is_none());

    // Unknown query: conflict.
    let stale = json!({"query": "query-transition-9", "transition_splits": {"transition-9": [[0]]}});
    assert_eq!(api.post_json(&format!("/sessions/{id}/decisions"), &stale).await.0, StatusCode::CONFLICT);

    // Overlapping parts: 422 naming the faces.
    let faces: Vec<u64> = g["graph"]["features"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["id"] == "transition-2")
        .unwrap()["faces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_u64().unwrap())
        .collect();
    let half = faces.len() / 2;
    let overlap = json!({
        "query": "query-transition-2",
        "transition_splits": {"transition-2": [faces[..half + 3].to_vec(), faces[half..].to_vec()]}
    });
    let (status, v) = api.post_json(&format!("/sessions/{id}/decisions"), &overlap).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let issues = v["face_issues"].as_array().unwrap();
    let dup: Vec<&Value> = issues.iter().filter(|i| i["problem"] == "Duplicate").collect();
    assert_eq!(dup.len(), 3);
    assert!(dup.iter().all(|i| faces[half..half + 3].contains(&i["face"].as_u64().unwrap())));

    // The rejected decision left the session untouched.
    let (_, state) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(state["phase"], "AwaitingDecision");
    assert_eq!(state["decisions"], 0);
}
