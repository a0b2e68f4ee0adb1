//! Scheduled runs of registered baselines.

use std::sync::Arc;

use ragbench_client::run_baseline;
use ragbench_core::dataset::Version;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::registry::ResultRecord;
use crate::state::{now, AppState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AutoOutcome {
    Scored {
        result_id: u64,
    },
    Aborted {
        failed_questions: usize,
        retry_scheduled: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoRun {
    pub baseline: String,
    pub revision: Version,
    pub attempt: u32,
    pub at: u64,
    #[serde(flatten)]
    pub outcome: AutoOutcome,
}

/// Runs a registered baseline over `revision` and scores the result.
///
/// Any backend failure aborts the run, since a partial baseline would be
/// published under the baseline's name. An aborted run is retried after
/// the configured delay until the attempt budget is spent.
pub async fn auto_evaluate(state: &Arc<AppState>, name: &str, revision: Version) -> Result<ResultRecord, ServiceError> {
    if !state.settings.baselines.contains_key(name) {
        return Err(ServiceError::NotFound(format!("no registered baseline {name:?}")));
    }
    let failed = match attempt(state, name, revision, 1).await? {
        Ok(record) => return Ok(record),
        Err(failed) => failed,
    };
    let retry_scheduled = state.settings.auto_max_attempts > 1;
    if retry_scheduled {
        let st = state.clone();
        let owned = name.to_owned();
        tokio::spawn(async move {
            for n in 2..=st.settings.auto_max_attempts {
                tokio::time::sleep(st.settings.auto_retry_delay).await;
                match attempt(&st, &owned, revision, n).await {
                    Ok(Ok(_)) => return,
                    Ok(Err(_)) => {}
                    Err(e) => {
                        log::warn!("retry of baseline {owned}: {e}");
                        return;
                    }
                }
            }
        });
    }
    Err(ServiceError::Unavailable(format!(
        "baseline run aborted: {failed} questions failed (retry scheduled: {retry_scheduled})"
    )))
}

/// One run. The inner error is the number of failed questions.
async fn attempt(
    state: &Arc<AppState>,
    name: &str,
    revision: Version,
    n: u32,
) -> Result<Result<ResultRecord, usize>, ServiceError> {
    let loaded = state.revision(revision)?;
    let st = state.clone();
    let owned = name.to_owned();
    let l = loaded.clone();
    let run = tokio::task::spawn_blocking(move || {
        let b = &st.settings.baselines[&owned];
        run_baseline(
            &l.public,
            b.retriever.as_ref(),
            b.generator.as_ref(),
            &b.prompt,
            &b.config,
        )
    })
    .await
    .map_err(|e| ServiceError::Corrupt(format!("baseline task failed: {e}")))?;

    let run = match run {
        Ok(r) if r.failures.is_empty() => r,
        other => {
            let failed = match other {
                Ok(r) => r.failures.len(),
                Err(e) => {
                    log::warn!("baseline {name} on {revision}: {e}");
                    loaded.public.public_questions.len()
                }
            };
            let retry_scheduled = n < state.settings.auto_max_attempts;
            record(
                state,
                name,
                revision,
                n,
                AutoOutcome::Aborted {
                    failed_questions: failed,
                    retry_scheduled,
                },
            );
            return Ok(Err(failed));
        }
    };
    let b = &state.settings.baselines[name];
    let sub = run.into_submission(
        &b.names.system_name,
        &b.names.retriever_name,
        &b.names.generator_name,
        &loaded.public,
    );
    let result = state.score(sub, loaded, true).await?;
    record(state, name, revision, n, AutoOutcome::Scored { result_id: result.id });
    Ok(Ok(result))
}

fn record(state: &AppState, name: &str, revision: Version, attempt: u32, outcome: AutoOutcome) {
    log::info!("baseline {name} on {revision}, attempt {attempt}: {outcome:?}");
    state.auto_runs.lock().expect("auto run log").push(AutoRun {
        baseline: name.to_owned(),
        revision,
        attempt,
        at: now(),
        outcome,
    });
}
