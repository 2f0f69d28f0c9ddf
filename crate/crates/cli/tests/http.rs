mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use ngc_cli::field::decode_mesh;
use ngc_cli::server::{router, AppState, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(dir: &std::path::Path) -> Arc<AppState> {
    let config = ServerConfig { data_dir: dir.to_path_buf(), refine_resolution: 0 };
    AppState::new(common::flat_model(), common::document(), config).unwrap()
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

async fn wait_job(state: &Arc<AppState>, id: u64) -> Value {
    for _ in 0..600 {
        let (status, body) = call(state, "GET", &format!("/job/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let job = json_of(&body);
        if job["status"] == "done" || job["status"] == "failed" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

fn keyframe_patch(base: u64) -> Value {
    json!({"base_rev": base, "gc": 0, "patch": {"keyframe": {"index": 0}}})
}

#[tokio::test]
async fn scene_is_served_with_revision() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, "GET", "/scene", None).await;
    assert_eq!(status, StatusCode::OK);
    let scene = json_of(&body);
    assert_eq!(scene["revision"], 0);
    assert_eq!(scene["version"], 1);
    assert_eq!(scene["shapes"][0]["meshes"][0]["gcs"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn identity_edit_makes_revision_with_same_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, "POST", "/edit", Some(keyframe_patch(0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body)["revision"], 1);
    let (_, m0) = call(&s, "GET", "/mesh?rev=0&res=32", None).await;
    let (_, m1) = call(&s, "GET", "/mesh?rev=1&res=32", None).await;
    assert_eq!(m0, m1);
    assert!(!decode_mesh(&m0).unwrap().triangles.is_empty());
}

#[tokio::test]
async fn stale_and_malformed_edits() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    assert_eq!(call(&s, "POST", "/edit", Some(keyframe_patch(0))).await.0, StatusCode::OK);
    let (status, body) = call(&s, "POST", "/edit", Some(keyframe_patch(0))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json_of(&body)["error"], "stale_revision");
    let (status, _) = call(&s, "POST", "/edit", Some(json!({"base_rev": 1, "gc": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let bad_radius = json!({"base_rev": 1, "gc": 0, "patch": {"keyframe": {"index": 0, "ry": -1.0}}});
    assert_eq!(call(&s, "POST", "/edit", Some(bad_radius)).await.0, StatusCode::BAD_REQUEST);
    let missing = json!({"base_rev": 1, "gc": 9, "patch": {"keyframe": {"index": 0}}});
    assert_eq!(call(&s, "POST", "/edit", Some(missing)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.current_revision(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_conflicting_edits_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    for round in 0..10u64 {
        let a = tokio::spawn({
            let s = s.clone();
            async move { call(&s, "POST", "/edit", Some(keyframe_patch(round))).await.0 }
        });
        let b = tokio::spawn({
            let s = s.clone();
            let patch = json!({"base_rev": round, "gc": 1, "patch": {"reparam": {"knots": [[0, 0], [0.5, 0.4], [1, 1]]}}});
            async move { call(&s, "POST", "/edit", Some(patch)).await.0 }
        });
        let mut got = [a.await.unwrap(), b.await.unwrap()];
        got.sort();
        assert_eq!(got, [StatusCode::OK, StatusCode::CONFLICT]);
    }
    assert_eq!(s.current_revision(), 10);
}

#[tokio::test]
async fn mesh_resolution_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, coarse) = call(&s, "GET", "/mesh?res=32", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, fine) = call(&s, "GET", "/mesh?res=64", None).await;
    assert_eq!(status, StatusCode::OK);
    let (coarse, fine) = (decode_mesh(&coarse).unwrap(), decode_mesh(&fine).unwrap());
    assert!(fine.vertices.len() > coarse.vertices.len());
    assert!(fine.triangles.len() > coarse.triangles.len());
    assert_eq!(call(&s, "GET", "/mesh?rev=5", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&s, "GET", "/mesh?res=1", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&s, "GET", "/job/42", None).await.0, StatusCode::NOT_FOUND);
}

fn handles(dx: f64) -> Value {
    let mut hs = Vec::new();
    for p in [[-0.5, 0.1, 0.0], [-0.5, -0.1, 0.05], [-0.5, 0.0, -0.1]] {
        hs.push(json!({"src": p, "dst": p}));
    }
    for p in [[0.5, 0.1, 0.0], [0.5, -0.1, 0.05], [0.5, 0.0, -0.1]] {
        hs.push(json!({"src": p, "dst": [p[0] + dx, p[1], p[2]]}));
    }
    Value::Array(hs)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn infeasible_deformation_fails_job() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, "POST", "/deform", Some(json!({"shape": "bar", "handles": handles(0.6)}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_job(&s, json_of(&body)["job"].as_u64().unwrap()).await;
    assert_eq!(job["status"], "failed");
    assert_eq!(job["kind"], "deform");
    assert_eq!(job["error"]["error"], "length_infeasible");
    assert_eq!(s.current_revision(), 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn deformation_commits_revision_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (_, body) = call(&s, "POST", "/deform", Some(json!({"shape": "bar", "handles": handles(-0.2), "fixed_gcs": [1]}))).await;
    let job = wait_job(&s, json_of(&body)["job"].as_u64().unwrap()).await;
    assert_eq!(job["status"], "done", "{job}");
    assert_eq!(job["revision"], 1);
    for a in job["artifacts"].as_array().unwrap() {
        assert!(std::path::Path::new(a.as_str().unwrap()).exists());
    }
    let (_, body) = call(&s, "GET", "/scene", None).await;
    let scene = json_of(&body);
    let gcs = &scene["shapes"][0]["meshes"][0]["gcs"];
    // the fixed GC keeps its control points
    assert_eq!(gcs[1]["control_points"][0], json!([0.0, -0.6, 0.0]));
    assert_ne!(gcs[0]["control_points"][3], json!([0.6, 0.0, 0.0]));
    let stale = json!({"shape": "bar", "handles": handles(0.0), "base_rev": 0});
    assert_eq!(call(&s, "POST", "/deform", Some(stale)).await.0, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn blend_job_records_blend() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let req = json!({"gc_a": 0, "gc_b": 1, "a_coef": 1.0, "b_coef": 0.0, "blend_radii": true});
    let (status, body) = call(&s, "POST", "/blend", Some(req)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_job(&s, json_of(&body)["job"].as_u64().unwrap()).await;
    assert_eq!(job["status"], "done", "{job}");
    let (_, body) = call(&s, "GET", "/scene", None).await;
    let blend = &json_of(&body)["shapes"][0]["meshes"][0]["gcs"][0]["blend"];
    assert_eq!(blend["latent_b"], 1);
    let bad = json!({"gc_a": 0, "gc_b": 7, "a_coef": 1.0, "b_coef": 0.0});
    assert_eq!(call(&s, "POST", "/blend", Some(bad)).await.0, StatusCode::NOT_FOUND);
}
