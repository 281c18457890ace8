use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use facteval::report::results_table;
use facteval::tasks::{AnnotationRecord, BundlePayload, CellKey, RecordIssue, Study, INSTRUCTIONS};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;

use crate::store::{AnnotationStore, Outcome, StoreError};

/// Header carrying an evaluator's access token.
pub const TOKEN_HEADER: &str = "x-evaluator-token";

pub struct AppState {
    pub study: Study,
    pub store: RwLock<AnnotationStore>,
    /// Evaluator id to token. `None` disables authentication.
    pub tokens: Option<HashMap<String, String>>,
    pub allow_overwrite: bool,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{task_id}", get(get_task))
        .route("/api/annotations", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/results", get(results))
        .route("/api/instructions", get(instructions))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn unauthorized() -> Response {
    error(StatusCode::UNAUTHORIZED, "missing or invalid evaluator token")
}

impl AppState {
    /// `Some(401)` unless `evaluator`'s token is presented.
    fn deny(&self, headers: &HeaderMap, evaluator: &str) -> Option<Response> {
        let tokens = self.tokens.as_ref()?;
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        match (tokens.get(evaluator), given) {
            (Some(expected), Some(given)) if expected == given => None,
            _ => Some(unauthorized()),
        }
    }

    /// `Some(401)` unless some evaluator's token is presented.
    fn deny_any(&self, headers: &HeaderMap) -> Option<Response> {
        let tokens = self.tokens.as_ref()?;
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        match given {
            Some(given) if tokens.values().any(|t| t == given) => None,
            _ => Some(unauthorized()),
        }
    }

    fn is_evaluator(&self, evaluator: &str) -> bool {
        self.study
            .payloads
            .iter()
            .any(|p| p.assigned.iter().any(|e| e == evaluator))
    }
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub evaluator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextTask {
    /// `None` once the evaluator has annotated every assigned candidate.
    pub task: Option<BundlePayload>,
    /// Labels of `task` this evaluator has already annotated.
    pub completed_labels: Vec<String>,
}

/// Lowest-indexed assigned bundle with an unannotated candidate.
pub fn next_for(study: &Study, store: &AnnotationStore, evaluator: &str) -> NextTask {
    for (payload, task) in study.payloads.iter().zip(&study.manifest.tasks) {
        if !payload.assigned.iter().any(|e| e == evaluator) {
            continue;
        }
        let done = |model: &String| {
            store.contains(&CellKey {
                evaluator_id: evaluator.to_owned(),
                task_id: task.task_id.clone(),
                model_id: model.clone(),
            })
        };
        if task.mapping.values().any(|m| !done(m)) {
            return NextTask {
                task: Some(payload.clone()),
                completed_labels: task
                    .mapping
                    .iter()
                    .filter(|(_, m)| done(m))
                    .map(|(l, _)| l.clone())
                    .collect(),
            };
        }
    }
    NextTask {
        task: None,
        completed_labels: Vec::new(),
    }
}

async fn next_task(State(state): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<NextQuery>) -> Response {
    if !state.is_evaluator(&q.evaluator) {
        return error(StatusCode::NOT_FOUND, format!("unknown evaluator `{}`", q.evaluator));
    }
    if let Some(resp) = state.deny(&headers, &q.evaluator) {
        return resp;
    }
    let store = state.store.read().await;
    Json(next_for(&state.study, &store, &q.evaluator)).into_response()
}

async fn get_task(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(task_id): Path<String>) -> Response {
    if let Some(resp) = state.deny_any(&headers) {
        return resp;
    }
    match state.study.payload(&task_id) {
        Some(payload) => Json(payload).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown task `{task_id}`")),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct SubmitQuery {
    #[serde(default)]
    pub overwrite: bool,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<SubmitQuery>,
    body: axum::body::Bytes,
) -> Response {
    let record: AnnotationRecord = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let issues = vec![RecordIssue::Schema { message: e.to_string() }];
            return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "violations": issues }))).into_response();
        }
    };
    if let Some(resp) = state.deny(&headers, &record.evaluator_id) {
        return resp;
    }
    let annotation = match state.study.resolve(&record) {
        Ok(a) => a,
        Err(issues) => {
            return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "violations": issues }))).into_response();
        }
    };
    if q.overwrite && !state.allow_overwrite {
        return error(StatusCode::CONFLICT, "overwrite is disabled on this server");
    }

    let mut store = state.store.write().await;
    match store.submit(annotation.clone(), q.overwrite) {
        Ok(outcome) => {
            let status = match outcome {
                Outcome::Accepted => "accepted",
                Outcome::Overwritten => "overwritten",
            };
            (
                StatusCode::CREATED,
                Json(json!({ "status": status, "record": annotation })),
            )
                .into_response()
        }
        Err(StoreError::Duplicate) => error(
            StatusCode::CONFLICT,
            "duplicate annotation for (evaluator, task, model); resubmit with ?overwrite=true to replace it",
        ),
        Err(e) => {
            tracing::error!("append failed: {e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatorProgress {
    pub done: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub expected: usize,
    pub accepted: usize,
    pub remaining: usize,
    pub evaluators: BTreeMap<String, EvaluatorProgress>,
}

pub fn progress_of(study: &Study, store: &AnnotationStore) -> Progress {
    let mut evaluators: BTreeMap<String, EvaluatorProgress> = BTreeMap::new();
    let mut accepted = 0;
    let expected = study.expected_cells();
    for key in &expected {
        let entry = evaluators
            .entry(key.evaluator_id.clone())
            .or_insert(EvaluatorProgress { done: 0, expected: 0 });
        entry.expected += 1;
        if store.contains(key) {
            entry.done += 1;
            accepted += 1;
        }
    }
    Progress {
        expected: expected.len(),
        accepted,
        remaining: expected.len() - accepted,
        evaluators,
    }
}

async fn progress(State(state): State<Arc<AppState>>) -> Response {
    let store = state.store.read().await;
    Json(progress_of(&state.study, &store)).into_response()
}

async fn results(State(state): State<Arc<AppState>>) -> Response {
    let annotations = state.store.read().await.annotations();
    Json(results_table(&annotations, &state.study)).into_response()
}

async fn instructions() -> Response {
    ([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], INSTRUCTIONS).into_response()
}
