//! HTTP backend for the annotation interface.
//!
//! ```text
//! GET  /api/taxonomy                       label tree
//! GET  /api/documents                      document summaries
//! GET  /api/documents/{id}                 one document, corpus record format
//! POST /api/annotations                    {annotator, document, mention, labels[]}
//! GET  /api/consensus/{id}?min_support=2   consensus labels per mention
//! GET  /api/progress/{annotator}           mentions annotated per document
//! ```
//!
//! Any other GET path is served from the UI asset directory when one is set.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finetype_core::agreement::{consensus, group_records};
use finetype_core::corpus::Document;
use finetype_core::{LabelId, Taxonomy};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::formats::{AnnotationLine, DocumentRecord};
use crate::store::AnnotationStore;

pub struct AppState {
    pub taxonomy: Taxonomy,
    pub documents: Vec<Document>,
    index: BTreeMap<String, usize>,
    pub store: AnnotationStore,
    pub ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(taxonomy: Taxonomy, documents: Vec<Document>, store: AnnotationStore, ui_dir: Option<PathBuf>) -> Self {
        let index = documents.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        AppState {
            taxonomy,
            documents,
            index,
            store,
            ui_dir,
        }
    }

    fn document(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.documents[i])
    }
}

type Shared = Arc<AppState>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/taxonomy", get(taxonomy))
        .route("/api/documents", get(documents))
        .route("/api/documents/{id}", get(document))
        .route("/api/annotations", post(annotate))
        .route("/api/consensus/{id}", get(consensus_view))
        .route("/api/progress/{annotator}", get(progress))
        .fallback(assets)
        .with_state(state)
}

#[derive(Serialize)]
struct TreeNode {
    path: String,
    name: String,
    depth: usize,
    children: Vec<TreeNode>,
}

fn tree(t: &Taxonomy, id: LabelId) -> TreeNode {
    TreeNode {
        path: t.path(id).into(),
        name: t.name(id).into(),
        depth: t.depth(id).unwrap_or(0),
        children: t.children(id).unwrap_or(&[]).iter().map(|&c| tree(t, c)).collect(),
    }
}

async fn taxonomy(State(s): State<Shared>) -> Json<Value> {
    let roots: Vec<TreeNode> = s.taxonomy.roots().iter().map(|&r| tree(&s.taxonomy, r)).collect();
    Json(json!({ "labels": s.taxonomy.len(), "roots": roots }))
}

async fn documents(State(s): State<Shared>) -> Json<Value> {
    let docs: Vec<Value> = s
        .documents
        .iter()
        .map(|d| json!({ "id": d.id, "split": d.split.as_str(), "mentions": d.mentions.len() }))
        .collect();
    Json(Value::Array(docs))
}

async fn document(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match s.document(&id) {
        Some(d) => Json(DocumentRecord::from_document(d, &s.taxonomy)).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no document `{id}`")),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRequest {
    annotator: String,
    document: String,
    mention: String,
    labels: Vec<String>,
}

async fn annotate(State(s): State<Shared>, body: Bytes) -> Response {
    let req: AnnotationRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed annotation: {e}")),
    };
    if req.annotator.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "annotator must not be empty");
    }
    let Some(doc) = s.document(&req.document) else {
        return error(StatusCode::BAD_REQUEST, format!("no document `{}`", req.document));
    };
    if !doc.mentions.iter().any(|m| m.id == req.mention) {
        return error(
            StatusCode::BAD_REQUEST,
            format!("document `{}` has no mention `{}`", req.document, req.mention),
        );
    }
    let labels = match s.taxonomy.resolve_closed(req.labels.iter().map(String::as_str)) {
        Ok(l) => l,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let record = AnnotationLine {
        annotator: req.annotator,
        document: req.document,
        mention: req.mention,
        labels: s.taxonomy.paths_of(&labels),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64),
    };
    let saved = record.clone();
    match s.store.append(record).await {
        Ok(()) => (StatusCode::CREATED, Json(saved)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
struct ConsensusQuery {
    min_support: Option<usize>,
}

async fn consensus_view(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ConsensusQuery>,
) -> Response {
    let min_support = q.min_support.unwrap_or(2);
    if min_support == 0 {
        return error(StatusCode::BAD_REQUEST, "min_support must be at least 1");
    }
    let Some(doc) = s.document(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no document `{id}`"));
    };
    let records: Vec<_> = match s
        .store
        .records()
        .iter()
        .filter(|r| r.document == id)
        .map(|r| r.to_record(&s.taxonomy))
        .collect::<Result<Vec<_>>>()
    {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
    };
    let grouped = match group_records(&records, &s.taxonomy) {
        Ok(g) => g,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let by_mention: BTreeMap<&str, _> = grouped.iter().map(|v| (v.mention.as_str(), v)).collect();
    let mut mentions = Vec::with_capacity(doc.mentions.len());
    for m in &doc.mentions {
        let (annotators, labels) = match by_mention.get(m.id.as_str()) {
            Some(v) => match consensus(v.votes.values(), min_support, &s.taxonomy) {
                Ok(c) => (v.votes.keys().cloned().collect::<Vec<_>>(), s.taxonomy.paths_of(&c)),
                Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            },
            None => (Vec::new(), Vec::new()),
        };
        mentions.push(json!({ "mention": m.id, "annotators": annotators, "labels": labels }));
    }
    Json(json!({ "document": id, "min_support": min_support, "mentions": mentions })).into_response()
}

async fn progress(State(s): State<Shared>, UrlPath(annotator): UrlPath<String>) -> Json<Value> {
    let records = s.store.records();
    let mut done: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.annotator == annotator) {
        done.entry(r.document.as_str()).or_default().insert(r.mention.as_str());
    }
    let mut annotated = 0;
    let mut total = 0;
    let docs: Vec<Value> = s
        .documents
        .iter()
        .map(|d| {
            let n = done.get(d.id.as_str()).map_or(0, |m| {
                d.mentions.iter().filter(|x| m.contains(x.id.as_str())).count()
            });
            annotated += n;
            total += d.mentions.len();
            json!({ "id": d.id, "annotated": n, "mentions": d.mentions.len() })
        })
        .collect();
    Json(json!({ "annotator": annotator, "annotated": annotated, "mentions": total, "documents": docs }))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn assets(State(s): State<Shared>, uri: Uri) -> Response {
    let Some(root) = &s.ui_dir else {
        return error(StatusCode::NOT_FOUND, format!("no route for {}", uri.path()));
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return error(StatusCode::BAD_REQUEST, "invalid path");
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no asset {}", uri.path())),
    }
}

/// Binds `addr` and serves until interrupted.
pub async fn run(state: AppState, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
