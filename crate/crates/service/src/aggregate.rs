//! "Actual versions" view: per system, the mean over its most recent
//! revisions.

use std::collections::BTreeMap;

use ragbench_core::dataset::Version;
use ragbench_core::metrics::{GenerationScores, MetricBundle, RetrievalScores};
use ragbench_core::submission::SystemKey;
use serde::{Deserialize, Serialize};

use crate::ledger::LedgerEntry;

pub const DEFAULT_RECENT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(flatten)]
    pub key: SystemKey,
    /// Newest first.
    pub revisions: Vec<Version>,
    /// Ledger entries the means were taken over, aligned with `revisions`.
    pub entry_ids: Vec<u64>,
    pub metrics: MetricBundle,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// For every system key, takes the latest approved entry per revision,
/// keeps the `n` newest revisions and averages each metric over them.
/// Metrics missing on some revisions are averaged over the rest.
pub fn actual_versions(entries: &[LedgerEntry], n: usize) -> Vec<AggregateRow> {
    let mut latest: BTreeMap<SystemKey, BTreeMap<Version, &LedgerEntry>> = BTreeMap::new();
    for e in entries {
        let key = SystemKey {
            system_name: e.system_name.clone(),
            retriever_name: e.retriever_name.clone(),
            generator_name: e.generator_name.clone(),
        };
        // Ledger order is approval order, so later entries replace earlier ones.
        latest.entry(key).or_default().insert(e.revision, e);
    }
    latest
        .into_iter()
        .filter(|_| n > 0)
        .map(|(key, by_rev)| {
            let chosen: Vec<&LedgerEntry> = by_rev.into_values().rev().take(n).collect();
            let col = |f: &dyn Fn(&MetricBundle) -> Option<f64>| mean(chosen.iter().map(|e| f(&e.metrics)));
            let metrics = MetricBundle {
                retrieval: RetrievalScores {
                    hit_rate: col(&|m| m.retrieval.hit_rate),
                    recall: col(&|m| m.retrieval.recall),
                    ndcg: col(&|m| m.retrieval.ndcg),
                },
                generation: GenerationScores {
                    rouge_l: col(&|m| m.generation.rouge_l),
                    substring_match: col(&|m| m.generation.substring_match),
                    judge_score: col(&|m| m.generation.judge_score),
                },
            };
            AggregateRow {
                key,
                revisions: chosen.iter().map(|e| e.revision).collect(),
                entry_ids: chosen.iter().map(|e| e.entry_id).collect(),
                metrics,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u64, system: &str, minor: u64, hit: f64, judge: Option<f64>) -> LedgerEntry {
        LedgerEntry {
            entry_id: id,
            result_id: id,
            system_name: system.into(),
            retriever_name: "r".into(),
            generator_name: "g".into(),
            revision: Version::new(1, minor, 0),
            metrics: MetricBundle {
                retrieval: RetrievalScores {
                    hit_rate: Some(hit),
                    ..Default::default()
                },
                generation: GenerationScores {
                    judge_score: judge,
                    ..Default::default()
                },
            },
            per_type: BTreeMap::new(),
            auto_generated: false,
            approved_at: id,
        }
    }

    #[test]
    fn means_over_newest_revisions() {
        let entries = vec![
            entry(0, "a", 1, 0.0, None),
            entry(1, "a", 2, 0.3, Some(0.5)),
            entry(2, "a", 3, 0.6, None),
            entry(3, "a", 4, 0.9, None),
            entry(4, "b", 1, 0.4, None),
            // Re-approval on the same revision supersedes the earlier entry.
            entry(5, "a", 4, 0.3, None),
        ];
        let rows = actual_versions(&entries, 3);
        assert_eq!(rows.len(), 2);
        let a = &rows[0];
        assert_eq!(
            a.revisions,
            vec![Version::new(1, 4, 0), Version::new(1, 3, 0), Version::new(1, 2, 0)]
        );
        assert_eq!(a.entry_ids, vec![5, 2, 1]);
        assert!((a.metrics.retrieval.hit_rate.unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(a.metrics.generation.judge_score, Some(0.5));
        assert_eq!(a.metrics.retrieval.recall, None);
        assert_eq!(rows[1].metrics.retrieval.hit_rate, Some(0.4));
        assert!(actual_versions(&entries, 0).is_empty());
    }
}
