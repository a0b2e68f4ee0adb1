//! HTTP interface. Every route answers JSON.
//!
//! | method | path | auth |
//! |---|---|---|
//! | POST | /api/submissions | none |
//! | GET | /api/submissions/{id} | none |
//! | GET | /api/results?revision=1.2.0 | none |
//! | GET | /api/results/actual?n=3 | none |
//! | GET | /api/revisions | none |
//! | GET | /api/admin/pending | bearer |
//! | POST | /api/admin/results/{id}/decision | bearer |
//! | POST | /api/admin/auto-evaluate | bearer |
//! | GET | /api/admin/auto-runs | bearer |
//!
//! Path and query values are parsed by hand so that rejections never
//! repeat what the caller sent.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use ragbench_core::dataset::Version;
use ragbench_core::submission::validate_submission;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::aggregate::{actual_versions, AggregateRow, DEFAULT_RECENT};
use crate::auto::{auto_evaluate, AutoRun};
use crate::error::ServiceError;
use crate::ledger::LedgerEntry;
use crate::registry::{Decision, ResultView};
use crate::state::{now, AppState};

/// Large enough for a full revision of answers at the response cap.
pub const BODY_LIMIT: usize = 32 * 1024 * 1024;

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/submissions", post(submit))
        .route("/api/submissions/{id}", get(submission))
        .route("/api/results", get(results))
        .route("/api/results/actual", get(actual))
        .route("/api/revisions", get(revisions))
        .route("/api/admin/pending", get(pending))
        .route("/api/admin/results/{id}/decision", post(decide))
        .route("/api/admin/auto-evaluate", post(auto))
        .route("/api/admin/auto-runs", get(auto_runs))
        .fallback(|| async { (StatusCode::NOT_FOUND, Json(json!({"error": "no such route"}))) })
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

fn parse_body(body: &[u8]) -> ApiResult<Value> {
    serde_json::from_slice(body)
        .map_err(|e| ServiceError::BadRequest(format!("malformed JSON at line {} column {}", e.line(), e.column())))
}

fn parse_id(raw: &str) -> ApiResult<u64> {
    raw.parse()
        .map_err(|_| ServiceError::BadRequest("result id must be a non-negative integer".into()))
}

fn parse_version(raw: &str) -> ApiResult<Version> {
    raw.parse()
        .map_err(|_| ServiceError::BadRequest("revision must be a version like 1.2.0".into()))
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if state.is_admin(token) {
        Ok(())
    } else {
        Err(ServiceError::Unauthorized)
    }
}

async fn submit(State(state): Shared, body: Bytes) -> ApiResult<(StatusCode, Json<ResultView>)> {
    let raw = parse_body(&body)?;
    let revision = raw
        .get("revision")
        .and_then(Value::as_str)
        .ok_or_else(|| ServiceError::BadRequest("revision must be a version like 1.2.0".into()))
        .and_then(parse_version)?;
    let loaded = state.revision(revision)?;
    let sub = validate_submission(&raw, &loaded.public).map_err(ServiceError::Invalid)?;
    let record = state.score(sub, loaded, false).await?;
    Ok((StatusCode::CREATED, Json(record.view())))
}

async fn submission(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<ResultView>> {
    let id = parse_id(&id)?;
    let registry = state.registry.lock().expect("registry lock");
    let record = registry
        .get(id)
        .ok_or_else(|| ServiceError::NotFound(format!("no result {id}")))?;
    Ok(Json(record.view()))
}

async fn results(State(state): Shared, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Vec<LedgerEntry>>> {
    let filter = q.get("revision").map(|r| parse_version(r)).transpose()?;
    let entries = state.ledger.entries()?;
    Ok(Json(
        entries
            .into_iter()
            .filter(|e| filter.is_none_or(|v| e.revision == v))
            .collect(),
    ))
}

async fn actual(State(state): Shared, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Vec<AggregateRow>>> {
    let n = match q.get("n") {
        Some(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ServiceError::BadRequest("n must be a positive integer".into()))?,
        None => DEFAULT_RECENT,
    };
    Ok(Json(actual_versions(&state.ledger.entries()?, n)))
}

async fn revisions(State(state): Shared) -> ApiResult<Json<Value>> {
    let rows: Vec<Value> = state
        .store
        .manifest()?
        .into_iter()
        .map(|m| json!({"version": m.version, "created_at": m.created_at, "root_hash": m.root_hash}))
        .collect();
    Ok(Json(Value::Array(rows)))
}

async fn pending(State(state): Shared, headers: HeaderMap) -> ApiResult<Json<Vec<ResultView>>> {
    require_admin(&state, &headers)?;
    let registry = state.registry.lock().expect("registry lock");
    Ok(Json(registry.pending().into_iter().map(|r| r.view()).collect()))
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: Decision,
}

async fn decide(
    State(state): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    require_admin(&state, &headers)?;
    let id = parse_id(&id)?;
    let body: DecisionBody = serde_json::from_value(parse_body(&body)?)
        .map_err(|_| ServiceError::BadRequest(r#"body must be {"decision": "approve" | "reject"}"#.into()))?;
    // Holding the registry lock serializes every ledger append.
    let mut registry = state.registry.lock().expect("registry lock");
    let record = registry.check_pending(id)?.clone();
    let entry = match body.decision {
        Decision::Approve => Some(state.ledger.append(LedgerEntry {
            entry_id: 0,
            result_id: record.id,
            system_name: record.key.system_name.clone(),
            retriever_name: record.key.retriever_name.clone(),
            generator_name: record.key.generator_name.clone(),
            revision: record.revision,
            metrics: record.evaluation.metrics.overall,
            per_type: record.evaluation.metrics.per_type.clone(),
            auto_generated: record.auto_generated,
            approved_at: now(),
        })?),
        Decision::Reject => None,
    };
    let updated = registry.decide(id, body.decision, entry.as_ref().map(|e| e.entry_id), now())?;
    Ok(Json(json!({"result": updated.view(), "ledger_entry": entry})))
}

#[derive(Deserialize)]
struct AutoBody {
    baseline: String,
    revision: Option<String>,
}

async fn auto(State(state): Shared, headers: HeaderMap, body: Bytes) -> ApiResult<(StatusCode, Json<ResultView>)> {
    require_admin(&state, &headers)?;
    let body: AutoBody = serde_json::from_value(parse_body(&body)?)
        .map_err(|_| ServiceError::BadRequest(r#"body must be {"baseline": name, "revision"?: version}"#.into()))?;
    let revision = match &body.revision {
        Some(r) => parse_version(r)?,
        None => state.latest_revision()?,
    };
    let record = auto_evaluate(&state, &body.baseline, revision).await?;
    Ok((StatusCode::CREATED, Json(record.view())))
}

async fn auto_runs(State(state): Shared, headers: HeaderMap) -> ApiResult<Json<Vec<AutoRun>>> {
    require_admin(&state, &headers)?;
    Ok(Json(state.auto_runs.lock().expect("auto run log").clone()))
}
