use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{TimeZone, Utc};
use facteval::corpus::ClinicalReport;
use facteval::metrics::{CoherenceRating, RawCounts};
use facteval::tasks::{build_tasks, export_tasks, AnnotationRecord, SystemOutput, TaskBundle};
use facteval_service::api::{progress_of, NextTask, Progress, TOKEN_HEADER};
use facteval_service::store::{fold, parse_log};
use facteval_service::{load_state, router, AnnotationStore, ServiceConfig, ServiceError, LOG_FILE, TOKENS_FILE};
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

const MODELS: [&str; 4] = ["bart-med", "bert-ext", "lead-3", "pegasus-cnn"];

struct Fixture {
    _dir: TempDir,
    config: ServiceConfig,
    bundles: Vec<TaskBundle>,
}

fn fixture(n_reports: usize, allow_overwrite: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let reports: Vec<ClinicalReport> = (0..n_reports)
        .map(|i| ClinicalReport {
            id: format!("r{i}"),
            specialty: "S".into(),
            body: format!("Body of report {i}. It has sentences."),
            reference: format!("Reference {i}."),
        })
        .collect();
    let outputs: Vec<SystemOutput> = reports
        .iter()
        .flat_map(|r| {
            MODELS.iter().map(|m| SystemOutput {
                model_id: (*m).into(),
                report_id: r.id.clone(),
                text: format!("Candidate text for {}.", r.id),
            })
        })
        .collect();
    let evaluators = vec!["e1".to_owned(), "e2".to_owned(), "e3".to_owned()];
    let bundles = build_tasks(&reports, &outputs, &evaluators, 11).unwrap();
    export_tasks(&bundles, &dir.path().join("bundles"), 11).unwrap();
    let config = ServiceConfig {
        bundles: dir.path().join("bundles"),
        data: dir.path().join("data"),
        addr: "127.0.0.1:0".parse().unwrap(),
        allow_overwrite,
    };
    Fixture {
        _dir: dir,
        config,
        bundles,
    }
}

fn record(task: &str, evaluator: &str, label: &str, counts: RawCounts) -> AnnotationRecord {
    AnnotationRecord {
        task_id: task.into(),
        evaluator_id: evaluator.into(),
        label: Some(label.into()),
        model_id: None,
        counts,
        coherence: CoherenceRating::Coherent,
        fact_spans: None,
        waiver: false,
        submitted_at: Utc.with_ymd_and_hms(2021, 4, 1, 9, 30, 0).unwrap(),
    }
}

fn valid(task: &str, evaluator: &str, label: &str) -> AnnotationRecord {
    record(task, evaluator, label, RawCounts::new(4, 3, 2, 3))
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(record: &AnnotationRecord, overwrite: bool) -> Request<Body> {
    let uri = if overwrite {
        "/api/annotations?overwrite=true"
    } else {
        "/api/annotations"
    };
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(record).unwrap()))
        .unwrap()
}

fn app(config: &ServiceConfig) -> axum::Router {
    router(Arc::new(load_state(config).unwrap()))
}

#[tokio::test]
async fn empty_log_progress() {
    let fx = fixture(10, false);
    let (status, body) = call(&app(&fx.config), get("/api/progress")).await;
    assert_eq!(status, StatusCode::OK);
    let progress: Progress = serde_json::from_value(body).unwrap();
    assert_eq!(
        (progress.accepted, progress.expected, progress.remaining),
        (0, 120, 120)
    );
    assert_eq!(progress.evaluators["e2"].expected, 40);
}

#[tokio::test]
async fn fresh_study_starts_at_first_task() {
    let fx = fixture(3, false);
    let (status, body) = call(&app(&fx.config), get("/api/tasks/next?evaluator=e1")).await;
    assert_eq!(status, StatusCode::OK);
    let next: NextTask = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(next.task.unwrap().task_id, "task-001");
    let text = body.to_string();
    for m in MODELS {
        assert!(!text.contains(m), "payload leaks {m}");
    }
}

#[tokio::test]
async fn unknown_evaluator_is_404() {
    let fx = fixture(1, false);
    let (status, _) = call(&app(&fx.config), get("/api/tasks/next?evaluator=nobody")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn task_lookup() {
    let fx = fixture(2, false);
    let app = app(&fx.config);
    let (status, body) = call(&app, get("/api/tasks/task-002")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["candidates"].as_array().unwrap().len(), 4);
    let (status, _) = call(&app, get("/api/tasks/task-404")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn submit_restart_and_results() {
    let fx = fixture(2, false);
    let app1 = app(&fx.config);
    let (status, body) = call(&app1, post(&valid("task-001", "e1", "A"), false)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (_, results) = call(&app1, get("/api/results")).await;
    let cells: Vec<&Value> = results["models"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|m| m["lines"][0]["evaluators"].as_array().unwrap())
        .filter(|v| !v.is_null())
        .collect();
    assert_eq!(cells.len(), 1);
    assert!((cells[0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    drop(app1);
    let app2 = app(&fx.config);
    let (_, body) = call(&app2, get("/api/progress")).await;
    assert_eq!(body["accepted"], 1);
    let (_, next) = call(&app2, get("/api/tasks/next?evaluator=e1")).await;
    assert_eq!(next["completed_labels"], serde_json::json!(["A"]));
}

#[tokio::test]
async fn invalid_record_rejected_with_invariant_name() {
    let fx = fixture(1, false);
    let app = app(&fx.config);
    let (status, body) = call(
        &app,
        post(&record("task-001", "e1", "A", RawCounts::new(2, 3, 3, 3)), false),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["violations"]
        .to_string()
        .contains("common_facts <= min(r_facts, g_facts)"));

    let (status, _) = call(&app, post(&valid("task-009", "e1", "A"), false)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, post(&valid("task-001", "e1", "Q"), false)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let bad_json = Request::post("/api/annotations")
        .body(Body::from("{\"task_id\":1}"))
        .unwrap();
    let (status, body) = call(&app, bad_json).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["kind"], "schema");
}

#[tokio::test]
async fn waiver_is_accepted_and_persisted() {
    let fx = fixture(1, false);
    let app = app(&fx.config);
    let mut rec = record("task-001", "e1", "A", RawCounts::new(4, 3, 2, 1));
    let (status, _) = call(&app, post(&rec, false)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    rec.waiver = true;
    let (status, _) = call(&app, post(&rec, false)).await;
    assert_eq!(status, StatusCode::CREATED);
    let store = AnnotationStore::open(&fx.config.data.join(LOG_FILE)).unwrap();
    assert!(store.annotations()[0].waiver);
}

#[tokio::test]
async fn duplicate_is_409_and_log_unchanged() {
    let fx = fixture(1, false);
    let app = app(&fx.config);
    let rec = valid("task-001", "e2", "B");
    assert_eq!(call(&app, post(&rec, false)).await.0, StatusCode::CREATED);
    let log = fx.config.data.join(LOG_FILE);
    let before = std::fs::read(&log).unwrap();
    assert_eq!(call(&app, post(&rec, false)).await.0, StatusCode::CONFLICT);
    // Overwrite is refused when the server does not allow it.
    assert_eq!(call(&app, post(&rec, true)).await.0, StatusCode::CONFLICT);
    assert_eq!(std::fs::read(&log).unwrap(), before);
}

#[tokio::test]
async fn overwrite_appends_superseding_record() {
    let fx = fixture(1, true);
    let app = app(&fx.config);
    let mut rec = valid("task-001", "e2", "B");
    call(&app, post(&rec, false)).await;
    rec.counts = RawCounts::new(5, 5, 5, 5);
    let (status, body) = call(&app, post(&rec, true)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["status"], "overwritten");
    let store = AnnotationStore::open(&fx.config.data.join(LOG_FILE)).unwrap();
    assert_eq!(store.events().len(), 2);
    assert_eq!(store.annotations()[0].counts.g_facts, 5);
}

#[tokio::test]
async fn next_task_walks_the_study() {
    let fx = fixture(4, false);
    let app = app(&fx.config);
    for bundle in &fx.bundles[..2] {
        for c in &bundle.candidates {
            call(&app, post(&valid(&bundle.task_id, "e1", &c.label), false)).await;
        }
    }
    for label in ["A", "B"] {
        call(&app, post(&valid("task-003", "e1", label), false)).await;
    }
    let (_, next) = call(&app, get("/api/tasks/next?evaluator=e1")).await;
    assert_eq!(next["task"]["task_id"], "task-003");
    assert_eq!(next["completed_labels"], serde_json::json!(["A", "B"]));

    for bundle in &fx.bundles[2..] {
        for c in &bundle.candidates {
            call(&app, post(&valid(&bundle.task_id, "e1", &c.label), false)).await;
        }
    }
    let (_, next) = call(&app, get("/api/tasks/next?evaluator=e1")).await;
    assert!(next["task"].is_null());
    let (_, next) = call(&app, get("/api/tasks/next?evaluator=e2")).await;
    assert_eq!(next["task"]["task_id"], "task-001");
}

#[tokio::test]
async fn tokens_are_enforced() {
    let fx = fixture(1, false);
    std::fs::create_dir_all(&fx.config.data).unwrap();
    let tokens: HashMap<&str, &str> = [("e1", "s1"), ("e2", "s2"), ("e3", "s3")].into();
    std::fs::write(
        fx.config.data.join(TOKENS_FILE),
        serde_json::to_string(&tokens).unwrap(),
    )
    .unwrap();
    let app = app(&fx.config);

    let (status, _) = call(&app, get("/api/tasks/next?evaluator=e1")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let wrong = Request::get("/api/tasks/next?evaluator=e1")
        .header(TOKEN_HEADER, "s2")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, wrong).await.0, StatusCode::UNAUTHORIZED);
    let right = Request::get("/api/tasks/next?evaluator=e1")
        .header(TOKEN_HEADER, "s1")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, right).await.0, StatusCode::OK);

    let mut req = post(&valid("task-001", "e1", "A"), false);
    req.headers_mut().insert(TOKEN_HEADER, "s1".parse().unwrap());
    assert_eq!(call(&app, req).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn instructions_are_served() {
    let fx = fixture(1, false);
    let (status, body) = call(&app(&fx.config), get("/api/instructions")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("syncopal episode"));
}

#[tokio::test]
async fn corrupt_log_refuses_to_start() {
    let fx = fixture(1, false);
    std::fs::create_dir_all(&fx.config.data).unwrap();
    std::fs::write(fx.config.data.join(LOG_FILE), "\n{oops\n").unwrap();
    match load_state(&fx.config) {
        Err(ServiceError::Store(e)) => assert!(e.to_string().contains("line 2"), "{e}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("started with a corrupt log"),
    }
}

#[tokio::test]
async fn port_in_use_is_reported() {
    let fx = fixture(1, false);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut config = fx.config.clone();
    config.addr = taken.local_addr().unwrap();
    let err = facteval_service::serve(config).await.unwrap_err();
    assert!(matches!(err, ServiceError::Bind { .. }));
}

/// Writes a log of `ops` submissions, returning the full log text.
fn write_log(fx: &Fixture, ops: &[(usize, usize, usize, bool, u32)]) -> String {
    let path = fx.config.data.join(LOG_FILE);
    let mut store = AnnotationStore::open(&path).unwrap();
    for &(task, evaluator, label, overwrite, g) in ops {
        let bundle = &fx.bundles[task];
        let rec = record(
            &bundle.task_id,
            ["e1", "e2", "e3"][evaluator],
            &bundle.candidates[label].label,
            RawCounts::new(g, g, 0, 0),
        );
        let annotation = load_state(&fx.config).unwrap().study.resolve(&rec).unwrap();
        let _ = store.submit(annotation, overwrite);
    }
    std::fs::read_to_string(&path).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn truncated_log_restarts_to_prefix_fold(
        ops in prop::collection::vec((0usize..3, 0usize..3, 0usize..4, any::<bool>(), 0u32..5), 1..25),
        cut in any::<prop::sample::Index>(),
    ) {
        let fx = fixture(3, true);
        let full = write_log(&fx, &ops);
        let lines: Vec<&str> = full.lines().collect();
        let keep = cut.index(lines.len() + 1);
        let truncated: String = lines[..keep].iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(fx.config.data.join(LOG_FILE), &truncated).unwrap();

        let state = load_state(&fx.config).unwrap();
        let store = state.store.try_read().unwrap();
        let events = parse_log(&full).unwrap();
        prop_assert_eq!(store.index(), &fold(&events[..keep]));
        let progress = progress_of(&state.study, &store);
        prop_assert_eq!(progress.accepted + progress.remaining, progress.expected);
        prop_assert_eq!(progress.accepted, store.index().len());
    }
}
