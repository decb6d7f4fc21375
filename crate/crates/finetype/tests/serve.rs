use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use finetype::formats::{builtin_taxonomy, parse_corpus};
use finetype::serve::{self, AppState};
use finetype::store::AnnotationStore;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const CORPUS: &str = r#"{"id":"d1","split":"test","sentences":[[{"text":"Smith","dep_head":1,"dep_label":"nsubj"},{"text":"sang","dep_head":null,"dep_label":"root"},{"text":"in","dep_head":1,"dep_label":"prep"},{"text":"Paris","dep_head":2,"dep_label":"pobj"}]],"mentions":[{"id":"m1","sentence":0,"start":0,"end":1,"head":0,"kind":"named"},{"id":"m2","sentence":0,"start":3,"end":4,"head":3,"kind":"named"}],"topic":"entertainment"}
{"id":"d2","split":"test","sentences":[[{"text":"Acme","dep_head":1,"dep_label":"nsubj"},{"text":"sued","dep_head":null,"dep_label":"root"}]],"mentions":[{"id":"m1","sentence":0,"start":0,"end":1,"head":0,"kind":"named"}]}
"#;

fn state(store: &Path, ui_dir: Option<&Path>) -> Arc<AppState> {
    let t = builtin_taxonomy();
    let docs = parse_corpus(CORPUS, &t).unwrap();
    let store = AnnotationStore::open(store).unwrap();
    Arc::new(AppState::new(t, docs, store, ui_dir.map(Path::to_path_buf)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn annotation(annotator: &str, document: &str, mention: &str, labels: &[&str]) -> String {
    json!({ "annotator": annotator, "document": document, "mention": mention, "labels": labels }).to_string()
}

#[tokio::test]
async fn read_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let app = serve::router(state(&dir.path().join("a.jsonl"), None));

    let (status, tax) = call(&app, "GET", "/api/taxonomy", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(tax["labels"], builtin_taxonomy().len());
    let person = tax["roots"].as_array().unwrap().iter().find(|r| r["path"] == "person").unwrap();
    assert_eq!(person["depth"], 1);
    assert_eq!(person["children"][0]["children"][0]["path"], "person/artist/actor");

    let (_, docs) = call(&app, "GET", "/api/documents", None).await;
    assert_eq!(docs, json!([
        { "id": "d1", "split": "test", "mentions": 2 },
        { "id": "d2", "split": "test", "mentions": 1 },
    ]));

    let (status, doc) = call(&app, "GET", "/api/documents/d1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["mentions"][1]["id"], "m2");
    assert_eq!(doc["sentences"][0][3]["text"], "Paris");

    let (status, _) = call(&app, "GET", "/api/documents/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/elsewhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_annotations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let app = serve::router(state(&path, None));
    let bad = [
        "not json".to_string(),
        r#"{"annotator":"a","document":"d1","mention":"m1"}"#.to_string(),
        r#"{"annotator":"a","document":"d1","mention":"m1","labels":[],"extra":1}"#.to_string(),
        annotation(" ", "d1", "m1", &["person"]),
        annotation("a", "d9", "m1", &["person"]),
        annotation("a", "d1", "m9", &["person"]),
        annotation("a", "d1", "m1", &["person/wizard"]),
    ];
    for body in &bad {
        let (status, v) = call(&app, "POST", "/api/annotations", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
    let (status, _) = call(&app, "GET", "/api/consensus/d1?min_support=0", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(std::fs::read_to_string(&path).unwrap_or_default().is_empty());
}

#[tokio::test]
async fn saved_labels_are_closed() {
    let dir = tempfile::tempdir().unwrap();
    let app = serve::router(state(&dir.path().join("a.jsonl"), None));
    let (status, saved) = call(&app, "POST", "/api/annotations", Some(&annotation("a", "d1", "m1", &["person/artist/music"]))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(saved["labels"], json!(["person", "person/artist", "person/artist/music"]));
    assert!(saved["timestamp"].as_u64().unwrap() > 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_annotators_then_consensus_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let app = serve::router(state(&path, None));
    // Five annotators call m1 an actor, one a musician; everyone calls m2 a city
    // and d2/m1 a company.
    let mut tasks = Vec::new();
    for i in 0..6 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let who = format!("annotator{i}");
            let m1 = if i == 5 { "person/artist/music" } else { "person/artist/actor" };
            for (doc, mention, label) in [("d1", "m1", m1), ("d1", "m2", "location/city"), ("d2", "m1", "organization/company")] {
                let (status, _) = call(&app, "POST", "/api/annotations", Some(&annotation(&who, doc, mention, &[label]))).await;
                assert_eq!(status, StatusCode::CREATED);
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }

    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk.lines().count(), 18);
    for line in on_disk.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }

    let expected_d1 = json!([
        ["person", "person/artist", "person/artist/actor"],
        ["location", "location/city"],
    ]);
    let (status, c) = call(&app, "GET", "/api/consensus/d1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(c["min_support"], 2);
    let labels: Vec<Value> = c["mentions"].as_array().unwrap().iter().map(|m| m["labels"].clone()).collect();
    assert_eq!(Value::Array(labels), expected_d1);
    assert_eq!(c["mentions"][0]["annotators"].as_array().unwrap().len(), 6);

    let (_, strict) = call(&app, "GET", "/api/consensus/d1?min_support=6", None).await;
    assert_eq!(strict["mentions"][0]["labels"], json!(["person", "person/artist"]));

    let (_, p) = call(&app, "GET", "/api/progress/annotator3", None).await;
    assert_eq!((p["annotated"].as_u64(), p["mentions"].as_u64()), (Some(3), Some(3)));
    let (_, p) = call(&app, "GET", "/api/progress/nobody", None).await;
    assert_eq!(p["annotated"], 0);

    drop(app);
    let app = serve::router(state(&path, None));
    let (_, again) = call(&app, "GET", "/api/consensus/d1", None).await;
    assert_eq!(again, c);
    call(&app, "POST", "/api/annotations", Some(&annotation("late", "d2", "m1", &["organization"]))).await;
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 19);
}

#[tokio::test]
async fn later_annotation_replaces_earlier_in_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let app = serve::router(state(&dir.path().join("a.jsonl"), None));
    for (who, label) in [("a", "person/athlete"), ("b", "person/athlete"), ("a", "person/coach"), ("b", "person/coach")] {
        call(&app, "POST", "/api/annotations", Some(&annotation(who, "d1", "m1", &[label]))).await;
    }
    let (_, c) = call(&app, "GET", "/api/consensus/d1", None).await;
    assert_eq!(c["mentions"][0]["labels"], json!(["person", "person/coach"]));
    assert_eq!(c["mentions"][1]["labels"], json!([]));
}

#[tokio::test]
async fn ui_assets() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(ui.join("assets")).unwrap();
    std::fs::write(ui.join("index.html"), "<html></html>").unwrap();
    std::fs::write(ui.join("assets/app.js"), "run()").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "no").unwrap();
    let app = serve::router(state(&dir.path().join("a.jsonl"), Some(&ui)));

    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/html; charset=utf-8");
    let resp = app.clone().oneshot(Request::get("/assets/app.js").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/javascript; charset=utf-8");
    let (status, _) = call(&app, "GET", "/../secret.txt", None).await;
    assert_ne!(status, StatusCode::OK);
    let (status, _) = call(&app, "GET", "/missing.css", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn busy_port_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let taken = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = taken.local_addr().unwrap();
    let t = builtin_taxonomy();
    let docs = parse_corpus(CORPUS, &t).unwrap();
    let store = AnnotationStore::open(&dir.path().join("a.jsonl")).unwrap();
    let err = serve::run(AppState::new(t, docs, store, None), addr).await.unwrap_err();
    assert!(format!("{err:#}").contains("binding"), "{err:#}");
}
