//! Scored submissions and their approval status, persisted as one JSON file.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use ragbench_core::dataset::Version;
use ragbench_core::evaluation::Evaluation;
use ragbench_core::metrics::MetricBundle;
use ragbench_core::submission::SystemKey;
use ragbench_core::QuestionType;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

/// A scored submission. Answers are dropped once scoring is done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: u64,
    #[serde(flatten)]
    pub key: SystemKey,
    pub revision: Version,
    pub status: Status,
    pub auto_generated: bool,
    pub submitted_at: u64,
    pub decided_at: Option<u64>,
    pub ledger_entry: Option<u64>,
    pub evaluation: Evaluation,
}

/// What the API shows for a result: aggregates only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    pub id: u64,
    #[serde(flatten)]
    pub key: SystemKey,
    pub revision: Version,
    pub status: Status,
    pub auto_generated: bool,
    pub submitted_at: u64,
    pub decided_at: Option<u64>,
    pub ledger_entry: Option<u64>,
    pub metrics: MetricBundle,
    pub per_type: BTreeMap<QuestionType, MetricBundle>,
    pub questions: usize,
    pub skipped: BTreeMap<String, usize>,
    pub partial: bool,
    pub judge_failures: usize,
}

impl ResultRecord {
    pub fn view(&self) -> ResultView {
        let m = &self.evaluation.metrics;
        ResultView {
            id: self.id,
            key: self.key.clone(),
            revision: self.revision,
            status: self.status,
            auto_generated: self.auto_generated,
            submitted_at: self.submitted_at,
            decided_at: self.decided_at,
            ledger_entry: self.ledger_entry,
            metrics: m.overall,
            per_type: m.per_type.clone(),
            questions: m.questions,
            skipped: m.skipped.clone(),
            partial: self.evaluation.partial,
            judge_failures: self.evaluation.judge_failures.len(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    next_id: u64,
    results: BTreeMap<u64, ResultRecord>,
}

/// In-memory registry mirrored to disk after every change.
#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    state: Snapshot,
}

impl Registry {
    pub fn load(path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        let state = match fs::read_to_string(&path) {
            Ok(text) => {
                serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", path.display())))?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Snapshot::default(),
            Err(e) => return Err(ServiceError::io(&path, e)),
        };
        Ok(Self { path, state })
    }

    fn persist(&self) -> Result<(), ServiceError> {
        let tmp = self.path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&self.state).expect("registry serializes");
        fs::write(&tmp, text).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| ServiceError::io(&self.path, e))
    }

    pub fn insert(
        &mut self,
        key: SystemKey,
        evaluation: Evaluation,
        auto_generated: bool,
        now: u64,
    ) -> Result<ResultRecord, ServiceError> {
        let id = self.state.next_id;
        let record = ResultRecord {
            id,
            key,
            revision: evaluation.revision,
            status: Status::Pending,
            auto_generated,
            submitted_at: now,
            decided_at: None,
            ledger_entry: None,
            evaluation,
        };
        self.state.next_id += 1;
        self.state.results.insert(id, record.clone());
        self.persist()?;
        Ok(record)
    }

    pub fn get(&self, id: u64) -> Option<&ResultRecord> {
        self.state.results.get(&id)
    }

    pub fn pending(&self) -> Vec<&ResultRecord> {
        self.state
            .results
            .values()
            .filter(|r| r.status == Status::Pending)
            .collect()
    }

    /// Moves a pending result to its final status. Deciding twice is a conflict.
    pub fn decide(
        &mut self,
        id: u64,
        decision: Decision,
        ledger_entry: Option<u64>,
        now: u64,
    ) -> Result<ResultRecord, ServiceError> {
        let record = self.check_pending(id)?;
        let mut record = record.clone();
        record.status = match decision {
            Decision::Approve => Status::Approved,
            Decision::Reject => Status::Rejected,
        };
        record.decided_at = Some(now);
        record.ledger_entry = ledger_entry;
        self.state.results.insert(id, record.clone());
        self.persist()?;
        Ok(record)
    }

    pub fn check_pending(&self, id: u64) -> Result<&ResultRecord, ServiceError> {
        let record = self
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("no result {id}")))?;
        if record.status != Status::Pending {
            return Err(ServiceError::Conflict(format!("result {id} was already decided")));
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ragbench_core::metrics::MetricReport;

    fn evaluation() -> Evaluation {
        Evaluation {
            revision: Version::new(1, 0, 0),
            metrics: MetricReport::default(),
            judge_failures: vec![],
            partial: false,
        }
    }

    fn key() -> SystemKey {
        SystemKey {
            system_name: "s".into(),
            retriever_name: "r".into(),
            generator_name: "g".into(),
        }
    }

    #[test]
    fn survives_reload_and_refuses_second_decision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let mut reg = Registry::load(&path).unwrap();
        let a = reg.insert(key(), evaluation(), false, 10).unwrap();
        let b = reg.insert(key(), evaluation(), false, 11).unwrap();
        assert_ne!(a.id, b.id);
        reg.decide(a.id, Decision::Approve, Some(0), 12).unwrap();
        assert!(matches!(
            reg.decide(a.id, Decision::Reject, None, 13),
            Err(ServiceError::Conflict(_))
        ));
        assert!(matches!(
            reg.decide(77, Decision::Reject, None, 13),
            Err(ServiceError::NotFound(_))
        ));

        let reg = Registry::load(&path).unwrap();
        assert_eq!(reg.get(a.id).unwrap().status, Status::Approved);
        assert_eq!(reg.pending().len(), 1);
        assert_eq!(reg.pending()[0].id, b.id);
    }
}
