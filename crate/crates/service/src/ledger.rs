//! Append-only ledger of approved results, one JSON object per line.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ragbench_core::dataset::Version;
use ragbench_core::metrics::MetricBundle;
use ragbench_core::QuestionType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Position in the ledger, starting at 0.
    pub entry_id: u64,
    pub result_id: u64,
    pub system_name: String,
    pub retriever_name: String,
    pub generator_name: String,
    pub revision: Version,
    pub metrics: MetricBundle,
    pub per_type: BTreeMap<QuestionType, MetricBundle>,
    pub auto_generated: bool,
    /// Unix seconds.
    pub approved_at: u64,
}

#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
}

impl Ledger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> Result<Vec<LedgerEntry>, ServiceError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(ServiceError::io(&self.path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| ServiceError::Corrupt(format!("{} line {}: {e}", self.path.display(), i + 1)))
            })
            .collect()
    }

    /// Appends one entry. Callers serialize access; the entry id is taken
    /// from the current length, so `entry.entry_id` is overwritten.
    pub fn append(&self, mut entry: LedgerEntry) -> Result<LedgerEntry, ServiceError> {
        entry.entry_id = self.entries()?.len() as u64;
        let mut line = serde_json::to_string(&entry).expect("ledger entries serialize");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| ServiceError::io(&self.path, e))?;
        f.write_all(line.as_bytes())
            .map_err(|e| ServiceError::io(&self.path, e))?;
        f.sync_data().map_err(|e| ServiceError::io(&self.path, e))?;
        Ok(entry)
    }
}
