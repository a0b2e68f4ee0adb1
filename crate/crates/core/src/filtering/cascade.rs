use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    check_named_entities, closed_book_check, compute_presence, graph_correspondence, judge_filter, score_acceptability,
    trim_extremes, AcceptabilityScorer, CriteriaCatalog, EntityRecognizer, FilterStage, FilterVerdict, Thresholds,
};
use crate::backend::{RetryPolicy, TextBackend};
use crate::generation::QAPair;
use crate::kg::DocId;
use crate::sampler::QuestionType;

#[derive(Debug, Clone, Copy)]
pub struct FilterConfig {
    pub acceptability_threshold: f64,
    pub thresholds: Thresholds,
    /// Fraction of answer segments a closed-book reply must cover to count
    /// as answering the question.
    pub closed_book_ratio: f64,
    /// Tail fraction trimmed from each end of the Simple and MultiHop
    /// correspondence scores, per question type.
    pub trim_fraction: f64,
    pub retry: RetryPolicy,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            acceptability_threshold: 0.5,
            thresholds: Thresholds::default(),
            closed_book_ratio: 1.0,
            trim_fraction: 0.05,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct FilterBackends<'a> {
    pub acceptability: &'a dyn AcceptabilityScorer,
    pub ner: &'a dyn EntityRecognizer,
    pub probes: Vec<&'a dyn TextBackend>,
    pub judge: &'a dyn TextBackend,
    pub criteria: &'a CriteriaCatalog,
}

/// Pairs sorted by how they left the cascade. Every pair carries the
/// verdicts of the stages it went through.
#[derive(Debug, Clone, Default)]
pub struct CascadeOutcome {
    pub passed: BTreeMap<QuestionType, Vec<QAPair>>,
    pub rejected: Vec<QAPair>,
    /// Undecided because a backend failed; retry on the next run.
    pub quarantined: Vec<QAPair>,
}

enum Status {
    Open,
    Rejected,
    Quarantined,
}

fn status(qa: &QAPair) -> Status {
    match qa.verdicts.last() {
        Some(v) if v.indeterminate => Status::Quarantined,
        Some(v) if !v.passed => Status::Rejected,
        _ => Status::Open,
    }
}

fn document_text(qa: &QAPair, docs: &BTreeMap<DocId, String>) -> Vec<String> {
    qa.source_docs.iter().filter_map(|d| docs.get(d).cloned()).collect()
}

/// Stages up to and including graph correspondence; stops at the first
/// stage that does not pass.
fn early_stages(mut qa: QAPair, docs: &BTreeMap<DocId, String>, b: &FilterBackends<'_>, c: &FilterConfig) -> QAPair {
    let verdict = match score_acceptability(&qa.question, b.acceptability) {
        Ok(s) if s >= c.acceptability_threshold => FilterVerdict::pass(FilterStage::Acceptability, Some(s), ""),
        Ok(s) => FilterVerdict::fail(FilterStage::Acceptability, Some(s), "below threshold"),
        Err(e) => FilterVerdict::indeterminate(FilterStage::Acceptability, e.to_string()),
    };
    qa.verdicts.push(verdict);
    if !matches!(status(&qa), Status::Open) {
        return qa;
    }

    let texts = document_text(&qa, docs);
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let ner = check_named_entities(&qa, &refs, b.ner);
    let mut details = ner.matched.join(", ");
    if ner.fallback_used {
        details.push_str(" (heuristic recognizer)");
    }
    qa.verdicts.push(if ner.found {
        FilterVerdict::pass(FilterStage::Ner, None, details)
    } else {
        FilterVerdict::fail(FilterStage::Ner, None, "no named entity from the sources")
    });
    if !matches!(status(&qa), Status::Open) {
        return qa;
    }

    qa.verdicts
        .push(match closed_book_check(&qa, &b.probes, c.closed_book_ratio, c.retry) {
            Some(true) => FilterVerdict::pass(FilterStage::ClosedBook, None, ""),
            Some(false) => FilterVerdict::fail(FilterStage::ClosedBook, None, "answerable without context"),
            None => FilterVerdict::indeterminate(FilterStage::ClosedBook, "every probe failed"),
        });
    if !matches!(status(&qa), Status::Open) {
        return qa;
    }

    let coeffs = compute_presence(&qa);
    let verdict = graph_correspondence(&qa, &coeffs, c.thresholds).expect("coefficients cover every subgraph entity");
    qa.verdicts.push(verdict);
    qa
}

fn judge_stage(mut qa: QAPair, docs: &BTreeMap<DocId, String>, b: &FilterBackends<'_>, c: &FilterConfig) -> QAPair {
    let document = document_text(&qa, docs).join("\n\n");
    let verdict = match judge_filter(&qa, &document, b.judge, b.criteria, c.retry) {
        Ok((ratings, passed)) => {
            let details = ratings
                .iter()
                .map(|(k, r)| format!("{k:?}={r}"))
                .collect::<Vec<_>>()
                .join(" ");
            let score = Some(f64::from(ratings.min()));
            if passed {
                FilterVerdict::pass(FilterStage::Judge, score, details)
            } else {
                FilterVerdict::fail(FilterStage::Judge, score, details)
            }
        }
        Err(e) => FilterVerdict::indeterminate(FilterStage::Judge, e.to_string()),
    };
    qa.verdicts.push(verdict);
    qa
}

/// Runs the whole cascade over `pairs`. `docs` maps internal document ids
/// to source text.
///
/// Per-pair stages run in parallel; the outlier trim over Simple and
/// MultiHop correspondence scores is a barrier between graph
/// correspondence and the judge.
pub fn run_cascade(
    pairs: Vec<QAPair>,
    docs: &BTreeMap<DocId, String>,
    backends: &FilterBackends<'_>,
    config: &FilterConfig,
) -> CascadeOutcome {
    let mut outcome = CascadeOutcome::default();
    let screened: Vec<QAPair> = pairs
        .into_par_iter()
        .map(|qa| early_stages(qa, docs, backends, config))
        .collect();

    let mut to_trim: BTreeMap<QuestionType, Vec<(QAPair, f64)>> = BTreeMap::new();
    let mut to_judge = Vec::new();
    for qa in screened {
        match status(&qa) {
            Status::Rejected => outcome.rejected.push(qa),
            Status::Quarantined => outcome.quarantined.push(qa),
            Status::Open if matches!(qa.qtype, QuestionType::Simple | QuestionType::MultiHop) => {
                let score = qa.verdicts.last().and_then(|v| v.score).unwrap_or(0.0);
                to_trim.entry(qa.qtype).or_default().push((qa, score));
            }
            Status::Open => to_judge.push(qa),
        }
    }
    for (_, scored) in to_trim {
        let all: Vec<QAPair> = scored.iter().map(|(qa, _)| qa.clone()).collect();
        let kept = trim_extremes(scored, config.trim_fraction).expect("trim fraction validated by config");
        let kept_ids: std::collections::BTreeSet<u64> = kept.iter().map(|qa| qa.id).collect();
        for mut qa in all {
            if kept_ids.contains(&qa.id) {
                to_judge.push(qa);
            } else {
                qa.verdicts.push(FilterVerdict::fail(
                    FilterStage::GraphCorrespondence,
                    None,
                    "trimmed as a correspondence-score outlier",
                ));
                outcome.rejected.push(qa);
            }
        }
    }

    let judged: Vec<QAPair> = to_judge
        .into_par_iter()
        .map(|qa| judge_stage(qa, docs, backends, config))
        .collect();
    for qa in judged {
        match status(&qa) {
            Status::Open => outcome.passed.entry(qa.qtype).or_default().push(qa),
            Status::Rejected => outcome.rejected.push(qa),
            Status::Quarantined => outcome.quarantined.push(qa),
        }
    }
    for pool in outcome.passed.values_mut() {
        pool.sort_by_key(|qa| qa.id);
    }
    outcome.rejected.sort_by_key(|qa| qa.id);
    outcome.quarantined.sort_by_key(|qa| qa.id);
    outcome
}

#[derive(Serialize)]
struct AuditLine<'a> {
    id: u64,
    qtype: QuestionType,
    question: &'a str,
    answer: &'a str,
    status: &'static str,
    verdicts: &'a [FilterVerdict],
}

/// Filter audit report: one JSON object per pair and line, ordered by id.
pub fn write_audit_report(outcome: &CascadeOutcome) -> String {
    let mut lines: Vec<(u64, String)> = Vec::new();
    let groups: [(&'static str, Vec<&QAPair>); 3] = [
        ("passed", outcome.passed.values().flatten().collect()),
        ("rejected", outcome.rejected.iter().collect()),
        ("quarantined", outcome.quarantined.iter().collect()),
    ];
    for (status, pairs) in groups {
        for qa in pairs {
            let line = AuditLine {
                id: qa.id,
                qtype: qa.qtype,
                question: &qa.question,
                answer: &qa.answer,
                status,
                verdicts: &qa.verdicts,
            };
            lines.push((qa.id, serde_json::to_string(&line).expect("audit line serializes")));
        }
    }
    lines.sort_by_key(|(id, _)| *id);
    lines.into_iter().map(|(_, l)| l + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, FnBackend, ScriptedBackend};
    use crate::filtering::HeuristicRecognizer;
    use crate::testkit::qa_pair;

    fn pairs() -> Vec<QAPair> {
        let mut simple = qa_pair(
            QuestionType::Simple,
            &[("Morty Smith", "voice", "Keisuke Chiba")],
            "Who voiced Morty Smith?",
            "Keisuke Chiba",
        );
        simple.id = 1;
        let mut bridge_leak = qa_pair(
            QuestionType::MultiHop,
            &[
                ("FAW", "country of origin", "China"),
                ("FAW", "number of cars sold in 2023", "2139"),
            ],
            "Where is FAW from, the maker that sold 2139 cars in 2023?",
            "China",
        );
        bridge_leak.id = 2;
        let mut set = qa_pair(
            QuestionType::Set,
            &[
                ("Ryan Otter", "composed music for", "Method"),
                ("Ryan Otter", "composed music for", "Trigger"),
            ],
            "What projects has Ryan Otter composed music for?",
            "Trigger, Method",
        );
        set.id = 3;
        vec![simple, bridge_leak, set]
    }

    fn docs() -> BTreeMap<DocId, String> {
        (0..4)
            .map(|d| {
                (
                    d,
                    "Keisuke Chiba voices Morty Smith. FAW sold 2139 cars. Ryan Otter scored Method and Trigger."
                        .to_owned(),
                )
            })
            .collect()
    }

    #[test]
    fn cascade_routes_pairs_and_records_verdicts() {
        let accept = |_: &str| Ok(0.9);
        let probe = ScriptedBackend::constant("no idea");
        let judge = ScriptedBackend::constant("2");
        let criteria = CriteriaCatalog::builtin();
        let backends = FilterBackends {
            acceptability: &accept,
            ner: &HeuristicRecognizer,
            probes: vec![&probe],
            judge: &judge,
            criteria: &criteria,
        };
        let config = FilterConfig {
            retry: RetryPolicy::immediate(),
            ..FilterConfig::default()
        };
        let outcome = run_cascade(pairs(), &docs(), &backends, &config);
        assert_eq!(outcome.passed[&QuestionType::Simple].len(), 1);
        assert_eq!(outcome.passed[&QuestionType::Set].len(), 1);
        assert_eq!(outcome.rejected.len(), 1);
        assert_eq!(outcome.rejected[0].id, 2);
        let stages: Vec<FilterStage> = outcome.passed[&QuestionType::Simple][0]
            .verdicts
            .iter()
            .map(|v| v.stage)
            .collect();
        assert_eq!(
            stages,
            [
                FilterStage::Acceptability,
                FilterStage::Ner,
                FilterStage::ClosedBook,
                FilterStage::GraphCorrespondence,
                FilterStage::Judge
            ]
        );

        let report = write_audit_report(&outcome);
        assert_eq!(report.lines().count(), 3);
        assert!(report.lines().next().unwrap().contains("\"status\":\"passed\""));

        let again = run_cascade(pairs(), &docs(), &backends, &config);
        assert_eq!(write_audit_report(&again), report);
    }

    #[test]
    fn backend_failures_quarantine() {
        let accept = |_: &str| -> Result<f64, BackendError> { Err(BackendError::Transient("x".into())) };
        let judge = FnBackend(|_: &str| Err(BackendError::Fatal("down".into())));
        let probe = ScriptedBackend::constant("no idea");
        let criteria = CriteriaCatalog::builtin();
        let backends = FilterBackends {
            acceptability: &accept,
            ner: &HeuristicRecognizer,
            probes: vec![&probe],
            judge: &judge,
            criteria: &criteria,
        };
        let config = FilterConfig {
            retry: RetryPolicy::immediate(),
            ..FilterConfig::default()
        };
        let outcome = run_cascade(pairs(), &docs(), &backends, &config);
        assert_eq!(outcome.quarantined.len(), 3);
        assert!(outcome.quarantined.iter().all(|qa| qa.verdicts[0].indeterminate));
    }
}
