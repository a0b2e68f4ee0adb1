#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ragbench_core::backend::RetryPolicy;
use ragbench_core::dataset::{build_revision, DatasetRevision, DatasetStore, Version};
use ragbench_core::pipeline::{run_pipeline, PipelineConfig};
use ragbench_core::testkit::fixture;
use ragbench_service::{router, AppState, Settings};
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "admin-secret";

pub struct Deployment {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub revisions: Vec<DatasetRevision>,
}

/// Releases `releases` revisions built from the fixture corpus and starts
/// the service over them.
pub fn deploy(docs: usize, quota: usize, releases: usize, tune: impl FnOnce(&mut Settings)) -> Deployment {
    let dir = tempfile::tempdir().unwrap();
    let store = DatasetStore::open(dir.path().join("store")).unwrap();
    let corpus = fixture::Corpus::new(docs);
    let backends = fixture::Backends::new(&corpus);
    let records = corpus.records();
    let config = PipelineConfig {
        retry: RetryPolicy::immediate(),
        quota,
        seed: 21,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&records, &backends.pipeline(), &config).unwrap();
    let mut revisions = Vec::new();
    let mut latest = Version::new(1, 0, 0);
    for i in 0..releases {
        let rev = build_revision(&run.testset, &records, latest, 21 + i as u64).unwrap();
        store.write_revision(&rev).unwrap();
        latest = rev.version;
        revisions.push(rev);
    }
    let mut settings = Settings::new(dir.path().join("service"), TOKEN);
    settings.retry = RetryPolicy::immediate();
    tune(&mut settings);
    let state = AppState::new(store, settings).unwrap();
    Deployment { dir, state, revisions }
}

impl Deployment {
    pub fn app(&self) -> Router {
        router(self.state.clone())
    }

    pub async fn call(
        &self,
        method: &str,
        path: &str,
        body: Option<&str>,
        token: Option<&str>,
    ) -> (StatusCode, String) {
        call(self.app(), method, path, body, token).await
    }

    pub async fn json(
        &self,
        method: &str,
        path: &str,
        body: Option<&Value>,
        token: Option<&str>,
    ) -> (StatusCode, Value) {
        let text = body.map(|b| b.to_string());
        let (status, out) = self.call(method, path, text.as_deref(), token).await;
        (status, serde_json::from_str(&out).unwrap_or(Value::Null))
    }
}

pub async fn call(
    app: Router,
    method: &str,
    path: &str,
    body: Option<&str>,
    token: Option<&str>,
) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or_default().to_owned())).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}
