mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use common::{deploy, TOKEN};
use ragbench_client::config::SystemNames;
use ragbench_client::{BaselineConfig, PromptSpec};
use ragbench_core::backend::{BackendError, FnBackend, HashEmbedder, RetryPolicy};
use ragbench_core::evaluation::oracle_answers;
use ragbench_core::submission::{AnswerEntry, Answers};
use ragbench_service::{AppState, RegisteredBaseline, Settings};
use serde_json::{json, Value};

fn submission(rev: &ragbench_core::dataset::DatasetRevision, system: &str, answers: &Answers) -> Value {
    json!({
        "system_name": system,
        "retriever_name": "oracle-retriever",
        "generator_name": "oracle-generator",
        "revision": rev.version.to_string(),
        "answers": answers,
    })
}

fn metric(v: &Value, group: &str, name: &str) -> Option<f64> {
    v["metrics"][group][name].as_f64()
}

#[tokio::test]
async fn submit_approve_and_publish() {
    let d = deploy(12, 3, 1, |_| {});
    let rev = &d.revisions[0];
    let body = submission(rev, "oracle", &oracle_answers(rev));

    let (status, view) = d.json("POST", "/api/submissions", Some(&body), None).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    assert_eq!(view["status"], "pending");
    for (g, m) in [
        ("retrieval", "hit_rate"),
        ("retrieval", "recall"),
        ("retrieval", "ndcg"),
        ("generation", "rouge_l"),
        ("generation", "substring_match"),
    ] {
        assert_eq!(metric(&view, g, m), Some(1.0), "{m}");
    }
    assert_eq!(view["metrics"]["generation"]["judge_score"], Value::Null);
    assert_eq!(view["per_type"].as_object().unwrap().len(), 4);
    let id = view["id"].as_u64().unwrap();

    let (status, got) = d.call("GET", &format!("/api/submissions/{id}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!got.contains("model_answer") && !got.contains("found_ids"), "{got}");

    assert_eq!(
        d.call("GET", "/api/admin/pending", None, None).await.0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        d.call("GET", "/api/admin/pending", None, Some("admin-secreT")).await.0,
        StatusCode::UNAUTHORIZED
    );
    let (status, pending) = d.json("GET", "/api/admin/pending", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(pending.as_array().unwrap().len(), 1);

    let decide = |id: u64| format!("/api/admin/results/{id}/decision");
    let approve = json!({"decision": "approve"});
    assert_eq!(
        d.json("POST", &decide(id), Some(&approve), None).await.0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        d.json("POST", &decide(999), Some(&approve), Some(TOKEN)).await.0,
        StatusCode::NOT_FOUND
    );
    let (status, out) = d.json("POST", &decide(id), Some(&approve), Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["result"]["status"], "approved");
    assert_eq!(out["ledger_entry"]["entry_id"], 0);

    let ledger_before = std::fs::read(d.state.ledger.path()).unwrap();
    let (status, _) = d.json("POST", &decide(id), Some(&approve), Some(TOKEN)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(std::fs::read(d.state.ledger.path()).unwrap(), ledger_before);

    // A second, rejected submission for the same key leaves the ledger alone.
    let (_, second) = d.json("POST", "/api/submissions", Some(&body), None).await;
    let second = second["id"].as_u64().unwrap();
    assert_ne!(second, id);
    let (status, out) = d
        .json(
            "POST",
            &decide(second),
            Some(&json!({"decision": "reject"})),
            Some(TOKEN),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(out["result"]["status"], "rejected");
    assert_eq!(std::fs::read(d.state.ledger.path()).unwrap(), ledger_before);

    let (_, results) = d
        .json("GET", &format!("/api/results?revision={}", rev.version), None, None)
        .await;
    assert_eq!(results.as_array().unwrap().len(), 1);
    assert_eq!(results[0]["result_id"], id);
    assert_eq!(metric(&results[0], "retrieval", "ndcg"), Some(1.0));
    let (_, other) = d.json("GET", "/api/results?revision=9.9.9", None, None).await;
    assert!(other.as_array().unwrap().is_empty());
    assert_eq!(
        d.call("GET", "/api/results?revision=latest", None, None).await.0,
        StatusCode::BAD_REQUEST
    );

    // State survives a restart.
    let store = ragbench_core::dataset::DatasetStore::open(d.dir.path().join("store")).unwrap();
    let reopened = AppState::new(store, Settings::new(d.dir.path().join("service"), TOKEN)).unwrap();
    let reg = reopened.registry.lock().unwrap();
    assert_eq!(
        reg.get(id).unwrap().status,
        ragbench_service::registry::Status::Approved
    );
    assert!(reg.pending().is_empty());
}

#[tokio::test]
async fn invalid_submissions_are_rejected_with_a_report() {
    let d = deploy(12, 3, 1, |_| {});
    let rev = &d.revisions[0];
    let mut answers = oracle_answers(rev);
    answers.remove("2");
    answers.get_mut("0").unwrap().found_ids.push(10_000);
    let (status, out) = d
        .json("POST", "/api/submissions", Some(&submission(rev, "s", &answers)), None)
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(out["report"]["missing_questions"], json!(["2"]));
    assert_eq!(out["report"]["unknown_ids"].as_array().unwrap().len(), 1);

    let mut raw = submission(rev, "s", &oracle_answers(rev));
    raw["answers"]["1"]["found_ids"] = json!(["seven"]);
    let (status, out) = d.call("POST", "/api/submissions", Some(&raw.to_string()), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(out.contains("non_integer_ids") && !out.contains("seven"), "{out}");

    let (status, out) = d
        .call("POST", "/api/submissions", Some("{\"revision\": \"1.1.0\", oops"), None)
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(out.contains("malformed JSON") && !out.contains("oops"));

    let mut raw = submission(rev, "s", &oracle_answers(rev));
    raw["revision"] = json!("7.0.0");
    assert_eq!(
        d.json("POST", "/api/submissions", Some(&raw), None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        d.call("GET", "/api/submissions/abc", None, None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(d.call("GET", "/api/nowhere", None, None).await.0, StatusCode::NOT_FOUND);
    assert!(d.state.registry.lock().unwrap().pending().is_empty());
}

#[tokio::test]
async fn empty_retrieval_scores_zero() {
    let d = deploy(12, 3, 1, |_| {});
    let rev = &d.revisions[0];
    let answers: Answers = oracle_answers(rev)
        .into_iter()
        .map(|(q, a)| (q, AnswerEntry { found_ids: vec![], ..a }))
        .collect();
    let (status, view) = d
        .json("POST", "/api/submissions", Some(&submission(rev, "s", &answers)), None)
        .await;
    assert_eq!(status, StatusCode::CREATED);
    for m in ["hit_rate", "recall", "ndcg"] {
        assert_eq!(metric(&view, "retrieval", m), Some(0.0));
    }
    assert_eq!(metric(&view, "generation", "rouge_l"), Some(1.0));
}

#[tokio::test]
async fn actual_versions_average_the_recent_revisions() {
    let d = deploy(12, 3, 4, |_| {});
    let (_, revs) = d.json("GET", "/api/revisions", None, None).await;
    assert_eq!(revs.as_array().unwrap().len(), 4);
    for (i, rev) in d.revisions.iter().enumerate() {
        // Drop the retrieval for i of the questions to vary the scores.
        let answers: Answers = oracle_answers(rev)
            .into_iter()
            .enumerate()
            .map(|(j, (q, a))| {
                if j < i {
                    (q, AnswerEntry { found_ids: vec![], ..a })
                } else {
                    (q, a)
                }
            })
            .collect();
        let (_, view) = d
            .json(
                "POST",
                "/api/submissions",
                Some(&submission(rev, "sys", &answers)),
                None,
            )
            .await;
        let id = view["id"].as_u64().unwrap();
        let path = format!("/api/admin/results/{id}/decision");
        assert_eq!(
            d.json("POST", &path, Some(&json!({"decision": "approve"})), Some(TOKEN))
                .await
                .0,
            StatusCode::OK
        );
    }
    let (_, ledger) = d.json("GET", "/api/results", None, None).await;
    let hits: Vec<f64> = ledger
        .as_array()
        .unwrap()
        .iter()
        .map(|e| metric(e, "retrieval", "hit_rate").unwrap())
        .collect();
    assert_eq!(hits.len(), 4);
    let expected = (hits[1] + hits[2] + hits[3]) / 3.0;

    let (status, rows) = d.json("GET", "/api/results/actual", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let row = &rows[0];
    assert_eq!(row["entry_ids"], json!([3, 2, 1]));
    assert!((metric(row, "retrieval", "hit_rate").unwrap() - expected).abs() < 1e-12);
    let (_, rows) = d.json("GET", "/api/results/actual?n=1", None, None).await;
    assert_eq!(metric(&rows[0], "retrieval", "hit_rate"), Some(hits[3]));
    assert_eq!(
        d.call("GET", "/api/results/actual?n=0", None, None).await.0,
        StatusCode::BAD_REQUEST
    );
}

fn echo_baseline(fail_first: usize) -> RegisteredBaseline {
    let calls = Arc::new(AtomicUsize::new(0));
    let generator = FnBackend(move |p: &str| {
        if calls.fetch_add(1, Ordering::SeqCst) < fail_first {
            return Err(BackendError::Fatal("generator offline".into()));
        }
        Ok(p.split("Context:\n")
            .nth(1)
            .unwrap_or_default()
            .chars()
            .take(300)
            .collect())
    });
    RegisteredBaseline {
        names: SystemNames {
            system_name: "echo-baseline".into(),
            retriever_name: "hash".into(),
            generator_name: "echo".into(),
        },
        retriever: Arc::new(HashEmbedder::default()),
        generator: Arc::new(generator),
        prompt: PromptSpec::default(),
        config: BaselineConfig {
            retry: RetryPolicy::immediate(),
            workers: 1,
            ..BaselineConfig::default()
        },
    }
}

#[tokio::test]
async fn auto_evaluation_is_deterministic_and_marked() {
    let d = deploy(12, 3, 1, |s| {
        s.baselines.insert("echo".into(), echo_baseline(0));
    });
    let body = json!({"baseline": "echo"});
    assert_eq!(
        d.json("POST", "/api/admin/auto-evaluate", Some(&body), None).await.0,
        StatusCode::UNAUTHORIZED
    );
    let (status, first) = d
        .json("POST", "/api/admin/auto-evaluate", Some(&body), Some(TOKEN))
        .await;
    assert_eq!(status, StatusCode::CREATED, "{first}");
    assert_eq!(first["auto_generated"], true);
    assert_eq!(first["system_name"], "echo-baseline");
    let (_, second) = d
        .json("POST", "/api/admin/auto-evaluate", Some(&body), Some(TOKEN))
        .await;
    assert_eq!(first["metrics"], second["metrics"]);
    assert_ne!(first["id"], second["id"]);
    let missing = json!({"baseline": "nope"});
    assert_eq!(
        d.json("POST", "/api/admin/auto-evaluate", Some(&missing), Some(TOKEN))
            .await
            .0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn backend_outage_aborts_and_retries() {
    let d = deploy(12, 3, 1, |s| {
        s.baselines.insert("flaky".into(), echo_baseline(1));
        s.baselines.insert("down".into(), echo_baseline(usize::MAX));
        s.auto_retry_delay = Duration::from_millis(20);
        s.auto_max_attempts = 2;
    });
    let (status, out) = d
        .json(
            "POST",
            "/api/admin/auto-evaluate",
            Some(&json!({"baseline": "flaky"})),
            Some(TOKEN),
        )
        .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{out}");
    assert!(d.state.registry.lock().unwrap().pending().is_empty());

    let mut scored = false;
    for _ in 0..200 {
        tokio::time::sleep(Duration::from_millis(10)).await;
        let (_, runs) = d.json("GET", "/api/admin/auto-runs", None, Some(TOKEN)).await;
        if runs
            .as_array()
            .unwrap()
            .iter()
            .any(|r| r["outcome"] == "scored" && r["attempt"] == 2)
        {
            scored = true;
            break;
        }
    }
    assert!(scored, "retry did not complete");
    assert_eq!(d.state.registry.lock().unwrap().pending().len(), 1);

    let (status, _) = d
        .json(
            "POST",
            "/api/admin/auto-evaluate",
            Some(&json!({"baseline": "down"})),
            Some(TOKEN),
        )
        .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, runs) = d.json("GET", "/api/admin/auto-runs", None, Some(TOKEN)).await;
    let down: Vec<&Value> = runs
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["baseline"] == "down")
        .collect();
    assert_eq!(down.len(), 2);
    assert_eq!(down[1]["retry_scheduled"], false);
    assert_eq!(d.state.registry.lock().unwrap().pending().len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_approvals_write_one_entry() {
    let d = Arc::new(deploy(12, 3, 1, |_| {}));
    let rev = &d.revisions[0];
    let (_, view) = d
        .json(
            "POST",
            "/api/submissions",
            Some(&submission(rev, "s", &oracle_answers(rev))),
            None,
        )
        .await;
    let path = format!("/api/admin/results/{}/decision", view["id"]);
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let d = d.clone();
            let path = path.clone();
            tokio::spawn(async move {
                d.json("POST", &path, Some(&json!({"decision": "approve"})), Some(TOKEN))
                    .await
                    .0
            })
        })
        .collect();
    let mut statuses = Vec::new();
    for t in tasks {
        statuses.push(t.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1);
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 7);
    assert_eq!(d.state.ledger.entries().unwrap().len(), 1);
}
