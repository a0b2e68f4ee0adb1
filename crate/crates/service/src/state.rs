use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use ragbench_client::config::SystemNames;
use ragbench_client::{BaselineConfig, PromptSpec};
use ragbench_core::backend::{Embedder, RetryPolicy, TextBackend};
use ragbench_core::dataset::{DatasetRevision, DatasetStore, PublicSplits, Version};
use ragbench_core::evaluation::{evaluate_submission, EvaluationError, JudgeSetup};
use ragbench_core::filtering::CriteriaCatalog;
use ragbench_core::metrics::RagCriterion;
use ragbench_core::submission::Submission;
use tokio::sync::Semaphore;

use crate::auto::AutoRun;
use crate::error::ServiceError;
use crate::ledger::Ledger;
use crate::registry::{Registry, ResultRecord, Status};

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A baseline the service may run on its own.
pub struct RegisteredBaseline {
    pub names: SystemNames,
    pub retriever: Arc<dyn Embedder>,
    pub generator: Arc<dyn TextBackend>,
    pub prompt: PromptSpec,
    pub config: BaselineConfig,
}

pub struct Settings {
    /// Where registry.json and results.jsonl live.
    pub state_dir: PathBuf,
    /// Empty disables every admin route.
    pub admin_token: String,
    /// Scoring jobs allowed to run at once.
    pub workers: usize,
    pub judge: Option<Arc<dyn TextBackend>>,
    pub retry: RetryPolicy,
    pub baselines: BTreeMap<String, RegisteredBaseline>,
    /// Delay before an aborted automatic run is tried again.
    pub auto_retry_delay: Duration,
    pub auto_max_attempts: u32,
}

impl Settings {
    pub fn new(state_dir: impl Into<PathBuf>, admin_token: impl Into<String>) -> Self {
        Self {
            state_dir: state_dir.into(),
            admin_token: admin_token.into(),
            workers: 2,
            judge: None,
            retry: RetryPolicy::default(),
            baselines: BTreeMap::new(),
            auto_retry_delay: Duration::from_secs(300),
            auto_max_attempts: 3,
        }
    }
}

/// A released revision with its public half precomputed.
pub struct Loaded {
    pub rev: DatasetRevision,
    pub public: PublicSplits,
}

pub struct AppState {
    pub store: DatasetStore,
    pub settings: Settings,
    pub ledger: Ledger,
    /// Guards the registry and, through it, every ledger append.
    pub registry: Mutex<Registry>,
    pub auto_runs: Mutex<Vec<AutoRun>>,
    revisions: RwLock<HashMap<Version, Arc<Loaded>>>,
    jobs: Semaphore,
    criteria: CriteriaCatalog<RagCriterion>,
}

impl AppState {
    pub fn new(store: DatasetStore, settings: Settings) -> Result<Arc<Self>, ServiceError> {
        std::fs::create_dir_all(&settings.state_dir).map_err(|e| ServiceError::io(&settings.state_dir, e))?;
        let ledger = Ledger::new(settings.state_dir.join("results.jsonl"));
        let mut registry = Registry::load(settings.state_dir.join("registry.json"))?;
        // An approval that reached the ledger but not the registry.
        for entry in ledger.entries()? {
            if registry
                .get(entry.result_id)
                .is_some_and(|r| r.status == Status::Pending)
            {
                log::warn!(
                    "result {} found in ledger while pending, marking approved",
                    entry.result_id
                );
                registry.decide(
                    entry.result_id,
                    crate::registry::Decision::Approve,
                    Some(entry.entry_id),
                    entry.approved_at,
                )?;
            }
        }
        Ok(Arc::new(Self {
            store,
            ledger,
            registry: Mutex::new(registry),
            auto_runs: Mutex::new(Vec::new()),
            revisions: RwLock::new(HashMap::new()),
            jobs: Semaphore::new(settings.workers.max(1)),
            criteria: CriteriaCatalog::builtin_rag(),
            settings,
        }))
    }

    /// Loads a released revision once and keeps it.
    pub fn revision(&self, v: Version) -> Result<Arc<Loaded>, ServiceError> {
        if let Some(l) = self.revisions.read().expect("revision cache").get(&v) {
            return Ok(l.clone());
        }
        if !self.store.versions()?.contains(&v) {
            return Err(ServiceError::NotFound(format!("unknown revision {v}")));
        }
        let rev = self.store.read_revision(v)?;
        let loaded = Arc::new(Loaded {
            public: rev.public(),
            rev,
        });
        self.revisions
            .write()
            .expect("revision cache")
            .insert(v, loaded.clone());
        Ok(loaded)
    }

    pub fn latest_revision(&self) -> Result<Version, ServiceError> {
        self.store
            .latest_version()?
            .ok_or_else(|| ServiceError::NotFound("no revision released yet".into()))
    }

    pub fn is_admin(&self, presented: Option<&str>) -> bool {
        let expected = self.settings.admin_token.as_bytes();
        match presented {
            Some(p) if !expected.is_empty() && p.len() == expected.len() => {
                p.bytes().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
            }
            _ => false,
        }
    }

    /// Scores a validated submission in the bounded pool and files it as pending.
    pub async fn score(
        self: &Arc<Self>,
        sub: Submission,
        loaded: Arc<Loaded>,
        auto_generated: bool,
    ) -> Result<ResultRecord, ServiceError> {
        let _permit = self.jobs.acquire().await.expect("job semaphore is never closed");
        let state = self.clone();
        let key = sub.system_key();
        let evaluation = tokio::task::spawn_blocking(move || {
            let judge = state.settings.judge.as_deref().map(|backend| JudgeSetup {
                backend,
                catalog: &state.criteria,
                retry: state.settings.retry,
            });
            evaluate_submission(&sub, &loaded.rev, judge.as_ref())
        })
        .await
        .map_err(|e| ServiceError::Corrupt(format!("scoring task failed: {e}")))?
        .map_err(|e| match e {
            EvaluationError::Invalid(report) => ServiceError::Invalid(report),
            other => ServiceError::BadRequest(other.to_string()),
        })?;
        self.registry
            .lock()
            .expect("registry lock")
            .insert(key, evaluation, auto_generated, now())
    }
}
