//! Retrieval and generation metrics.
//!
//! Every per-query function returns `None` when the query cannot be scored
//! (no relevant ids, empty reference, no answer segments). Skipped queries
//! are left out of means and counted separately.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, RetryPolicy, TextBackend};
use crate::filtering::{parse_rating, CriteriaCatalog, Criterion, CriterionPrompt};
use crate::sampler::QuestionType;
use crate::text;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("missing judge criteria: {}", .0.join(", "))]
    MissingCriteria(Vec<String>),
    #[error("rating {rating} for {criterion} outside 0..=2")]
    BadRating { criterion: String, rating: u8 },
    #[error("judge backend failed: {0}")]
    Judge(String),
}

/// Retrieved public document ids for one question, against the relevant set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalJudgment {
    pub found_ids: Vec<u64>,
    pub relevant_ids: BTreeSet<u64>,
    pub k: usize,
}

impl RetrievalJudgment {
    pub fn new(found_ids: Vec<u64>, relevant_ids: BTreeSet<u64>) -> Self {
        Self {
            found_ids,
            relevant_ids,
            k: DEFAULT_K,
        }
    }

    /// Found ids with later duplicates removed, cut at `k`.
    pub fn top_k(&self) -> Vec<u64> {
        let mut seen = BTreeSet::new();
        self.found_ids
            .iter()
            .copied()
            .filter(|id| seen.insert(*id))
            .take(self.k.max(1))
            .collect()
    }

    fn hits(&self) -> Option<Vec<bool>> {
        if self.relevant_ids.is_empty() {
            return None;
        }
        Some(self.top_k().iter().map(|id| self.relevant_ids.contains(id)).collect())
    }
}

pub fn hit_rate(j: &RetrievalJudgment) -> Option<f64> {
    j.hits().map(|h| if h.contains(&true) { 1.0 } else { 0.0 })
}

pub fn recall(j: &RetrievalJudgment) -> Option<f64> {
    j.hits()
        .map(|h| h.iter().filter(|x| **x).count() as f64 / j.relevant_ids.len() as f64)
}

pub fn ndcg(j: &RetrievalJudgment) -> Option<f64> {
    let hits = j.hits()?;
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = hits
        .iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .map(|(i, _)| gain(i + 1))
        .sum();
    let ideal: f64 = (1..=j.relevant_ids.len().min(j.k.max(1))).map(gain).sum();
    Some(dcg / ideal)
}

/// Length of the longest common subsequence of two token lists.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS-based F1 over normalized tokens. `None` for an empty reference.
pub fn rouge_l(candidate: &str, reference: &str) -> Option<f64> {
    let r = text::tokenize(reference);
    if r.is_empty() {
        return None;
    }
    let c = text::tokenize(candidate);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return Some(0.0);
    }
    let p = lcs as f64 / c.len() as f64;
    let rc = lcs as f64 / r.len() as f64;
    Some(2.0 * p * rc / (p + rc))
}

/// Fraction of segments whose normalized form occurs in the normalized
/// candidate. Segments that normalize to nothing are ignored; `None` when
/// none remain.
pub fn substring_match(candidate: &str, segments: &[String]) -> Option<f64> {
    let segs: Vec<String> = segments
        .iter()
        .map(|s| text::match_form(s))
        .filter(|s| !s.is_empty())
        .collect();
    if segs.is_empty() {
        return None;
    }
    let cand = text::match_form(candidate);
    let found = segs.iter().filter(|s| cand.contains(s.as_str())).count();
    Some(found as f64 / segs.len() as f64)
}

/// Answer segments: the given entity names, or the answer split on commas
/// when none are given.
pub fn answer_segments(answer: &str, entities: &[String]) -> Vec<String> {
    if entities.is_empty() {
        answer
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect()
    } else {
        entities.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RagCriterion {
    NoFluff,
    RealWorldConsistency,
    ResultCorrectness,
    Completeness,
    FactualAccuracy,
    MainIdeaPreservation,
}

impl Criterion for RagCriterion {
    const ALL: &'static [Self] = &[
        RagCriterion::NoFluff,
        RagCriterion::RealWorldConsistency,
        RagCriterion::ResultCorrectness,
        RagCriterion::Completeness,
        RagCriterion::FactualAccuracy,
        RagCriterion::MainIdeaPreservation,
    ];
}

const RAG_CATALOG: &str = include_str!("../catalogs/rag_criteria.en.toml");

impl CriteriaCatalog<RagCriterion> {
    pub fn builtin_rag() -> Self {
        Self::parse(RAG_CATALOG).expect("built-in answer criteria catalog parses")
    }

    pub fn render_rag(
        &self,
        criterion: &CriterionPrompt<RagCriterion>,
        question: &str,
        reference: &str,
        candidate: &str,
    ) -> String {
        self.template()
            .trim_start()
            .replace("{title}", &criterion.title)
            .replace("{description}", &criterion.description)
            .replace("{question}", question)
            .replace("{reference}", reference)
            .replace("{candidate}", candidate)
    }
}

/// Mean rating over the answer criteria, rescaled to the unit interval.
pub fn judge_score(ratings: &BTreeMap<RagCriterion, u8>) -> Result<f64, MetricsError> {
    let missing: Vec<String> = RagCriterion::ALL
        .iter()
        .filter(|c| !ratings.contains_key(c))
        .map(|c| format!("{c:?}"))
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingCriteria(missing));
    }
    if let Some((c, r)) = ratings.iter().find(|(_, r)| **r > 2) {
        return Err(MetricsError::BadRating {
            criterion: format!("{c:?}"),
            rating: *r,
        });
    }
    let total: u32 = ratings.values().map(|r| u32::from(*r)).sum();
    Ok(f64::from(total) / ratings.len() as f64 / 2.0)
}

/// Rates one answer on every criterion and returns its judge score.
pub fn judge_answer(
    question: &str,
    reference: &str,
    candidate: &str,
    judge: &dyn TextBackend,
    catalog: &CriteriaCatalog<RagCriterion>,
    retry: RetryPolicy,
) -> Result<f64, MetricsError> {
    let mut ratings = BTreeMap::new();
    for criterion in catalog.criteria() {
        let prompt = catalog.render_rag(criterion, question, reference, candidate);
        let reply = retry
            .run(|| judge.complete(&prompt))
            .map_err(|e: BackendError| MetricsError::Judge(e.to_string()))?;
        let rating = parse_rating(&reply).map_err(MetricsError::Judge)?;
        ratings.insert(criterion.key, rating);
    }
    judge_score(&ratings)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub hit_rate: Option<f64>,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub rouge_l: Option<f64>,
    pub substring_match: Option<f64>,
    /// `None` when no judge was run.
    pub judge_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub retrieval: RetrievalScores,
    pub generation: GenerationScores,
}

impl MetricBundle {
    pub fn values(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("hit_rate", self.retrieval.hit_rate),
            ("recall", self.retrieval.recall),
            ("ndcg", self.retrieval.ndcg),
            ("rouge_l", self.generation.rouge_l),
            ("substring_match", self.generation.substring_match),
            ("judge_score", self.generation.judge_score),
        ]
    }
}

/// Inputs for scoring one question.
#[derive(Debug, Clone)]
pub struct QueryInput<'a> {
    pub qtype: QuestionType,
    pub retrieval: RetrievalJudgment,
    pub candidate: &'a str,
    pub reference: &'a str,
    pub segments: Vec<String>,
    pub judge_score: Option<f64>,
}

pub fn score_query(q: &QueryInput<'_>) -> MetricBundle {
    MetricBundle {
        retrieval: RetrievalScores {
            hit_rate: hit_rate(&q.retrieval),
            recall: recall(&q.retrieval),
            ndcg: ndcg(&q.retrieval),
        },
        generation: GenerationScores {
            rouge_l: rouge_l(q.candidate, q.reference),
            substring_match: substring_match(q.candidate, &q.segments),
            judge_score: q.judge_score,
        },
    }
}

/// Per-metric count of skipped queries.
pub type SkipTally = BTreeMap<String, usize>;

/// Per-question, aggregate and per-type metric values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: MetricBundle,
    pub per_type: BTreeMap<QuestionType, MetricBundle>,
    pub per_question: BTreeMap<String, MetricBundle>,
    pub skipped: SkipTally,
    pub questions: usize,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

fn aggregate(rows: &[&MetricBundle]) -> (MetricBundle, SkipTally) {
    let mut tally = SkipTally::new();
    let mut col = |name: &str, f: fn(&MetricBundle) -> Option<f64>| {
        let (m, skipped) = mean(rows.iter().map(|b| f(b)));
        tally.insert(name.to_owned(), skipped);
        m
    };
    let bundle = MetricBundle {
        retrieval: RetrievalScores {
            hit_rate: col("hit_rate", |b| b.retrieval.hit_rate),
            recall: col("recall", |b| b.retrieval.recall),
            ndcg: col("ndcg", |b| b.retrieval.ndcg),
        },
        generation: GenerationScores {
            rouge_l: col("rouge_l", |b| b.generation.rouge_l),
            substring_match: col("substring_match", |b| b.generation.substring_match),
            judge_score: col("judge_score", |b| b.generation.judge_score),
        },
    };
    (bundle, tally)
}

/// Scores every question and aggregates. Means are taken in key order so
/// identical inputs give bit-identical reports.
pub fn build_report<'a>(inputs: impl IntoIterator<Item = (String, QueryInput<'a>)>) -> MetricReport {
    let mut per_question = BTreeMap::new();
    let mut types = BTreeMap::new();
    for (qid, q) in inputs {
        types.insert(qid.clone(), q.qtype);
        per_question.insert(qid, score_query(&q));
    }
    let all: Vec<&MetricBundle> = per_question.values().collect();
    let (overall, skipped) = aggregate(&all);
    let per_type = QuestionType::ALL
        .into_iter()
        .filter_map(|t| {
            let rows: Vec<&MetricBundle> = per_question
                .iter()
                .filter(|(qid, _)| types[*qid] == t)
                .map(|(_, b)| b)
                .collect();
            (!rows.is_empty()).then(|| (t, aggregate(&rows).0))
        })
        .collect();
    MetricReport {
        overall,
        per_type,
        questions: per_question.len(),
        per_question,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use proptest::prelude::*;

    fn j(found: &[u64], relevant: &[u64]) -> RetrievalJudgment {
        RetrievalJudgment::new(found.to_vec(), relevant.iter().copied().collect())
    }

    #[test]
    fn retrieval_examples() {
        assert_eq!(hit_rate(&j(&[17, 69, 69, 22, 3], &[69])), Some(1.0));
        assert_eq!(hit_rate(&j(&[1, 2], &[3])), Some(0.0));
        assert_eq!(recall(&j(&[1, 7, 8], &[1, 2])), Some(0.5));
        assert_eq!(recall(&j(&[2, 1], &[1, 2])), Some(1.0));
        assert_eq!(recall(&j(&[], &[1])), Some(0.0));
        assert_eq!(ndcg(&j(&[4], &[4])), Some(1.0));
        assert!((ndcg(&j(&[5, 4], &[4])).unwrap() - 0.630_929_753_571_457).abs() < 1e-12);
        assert_eq!(ndcg(&j(&[1, 2, 3, 5, 6, 4], &[4])), Some(0.0));
        assert_eq!(hit_rate(&j(&[1], &[])), None);
    }

    #[test]
    fn duplicates_do_not_push_relevant_out_of_top_k() {
        let dup = j(&[1, 1, 1, 1, 1, 9], &[9]);
        assert_eq!(dup.top_k(), vec![1, 9]);
        assert_eq!(hit_rate(&dup), Some(1.0));
        assert!((ndcg(&dup).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("The cat sat.", "the cat sat"), Some(1.0));
        assert_eq!(rouge_l("dog", "cat"), Some(0.0));
        let f = rouge_l("the cat sat", "the dog sat").unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l("anything", " ,. "), None);
        assert_eq!(rouge_l("", "cat"), Some(0.0));
    }

    #[test]
    fn substring_examples() {
        let segs = ["Trigger".to_owned(), "Method".to_owned()];
        assert_eq!(substring_match("Music for Trigger and Method", &segs), Some(1.0));
        assert_eq!(substring_match("Music for Trigger", &segs), Some(0.5));
        assert_eq!(substring_match("", &segs), Some(0.0));
        assert_eq!(substring_match("x", &[]), None);
        assert_eq!(substring_match("x", &["  ".to_owned()]), None);
        assert_eq!(answer_segments("Trigger, Method", &[]), segs);
    }

    #[test]
    fn judge_score_examples() {
        let all = |r: u8| RagCriterion::ALL.iter().map(|c| (*c, r)).collect::<BTreeMap<_, _>>();
        assert_eq!(judge_score(&all(2)), Ok(1.0));
        assert_eq!(judge_score(&all(0)), Ok(0.0));
        let mixed: BTreeMap<_, _> = RagCriterion::ALL.iter().copied().zip([2, 2, 2, 1, 1, 2]).collect();
        assert!((judge_score(&mixed).unwrap() - 10.0 / 12.0).abs() < 1e-12);
        let mut partial = all(1);
        partial.remove(&RagCriterion::Completeness);
        assert_eq!(
            judge_score(&partial),
            Err(MetricsError::MissingCriteria(vec!["Completeness".into()]))
        );
    }

    #[test]
    fn judge_answer_asks_once_per_criterion() {
        let judge = ScriptedBackend::constant("2");
        let catalog = CriteriaCatalog::builtin_rag();
        let s = judge_answer("q", "ref", "cand", &judge, &catalog, RetryPolicy::immediate()).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(judge.prompts().len(), 6);
        assert!(judge.prompts()[0].contains("Reference answer: ref"));
    }

    #[test]
    fn report_breaks_down_by_type_and_counts_skips() {
        let input = |t, found: &[u64], cand: &'static str| QueryInput {
            qtype: t,
            retrieval: j(found, &[1]),
            candidate: cand,
            reference: "alpha",
            segments: vec!["alpha".into()],
            judge_score: None,
        };
        let report = build_report([
            ("0".to_owned(), input(QuestionType::Simple, &[1], "alpha")),
            ("1".to_owned(), input(QuestionType::Set, &[2], "beta")),
        ]);
        assert_eq!(report.overall.retrieval.hit_rate, Some(0.5));
        assert_eq!(report.per_type[&QuestionType::Simple].generation.rouge_l, Some(1.0));
        assert_eq!(report.per_type[&QuestionType::Set].generation.rouge_l, Some(0.0));
        assert_eq!(report.skipped["judge_score"], 2);
        assert_eq!(report.overall.generation.judge_score, None);
        assert_eq!(report.skipped["ndcg"], 0);
    }

    fn tokens() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..8)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn rouge_is_symmetric_and_bounded(a in tokens(), b in tokens()) {
            let (a, b) = (a.join(" "), b.join(" "));
            let x = rouge_l(&a, &b).unwrap();
            let y = rouge_l(&b, &a).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn retrieval_properties(
            found in prop::collection::vec(0u64..12, 0..10),
            relevant in prop::collection::btree_set(0u64..12, 1..4),
        ) {
            let jd = RetrievalJudgment::new(found.clone(), relevant.clone());
            let r = recall(&jd).unwrap();
            let h = hit_rate(&jd).unwrap();
            let n = ndcg(&jd).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            if r > 0.0 { prop_assert_eq!(h, 1.0); }
            // Without the dedup step the same list can only do worse.
            let raw: Vec<u64> = found.iter().copied().take(DEFAULT_K).collect();
            let raw_hits: BTreeSet<u64> = raw.into_iter().filter(|x| relevant.contains(x)).collect();
            prop_assert!(r >= raw_hits.len() as f64 / relevant.len() as f64);
            let ideal: Vec<u64> = relevant.iter().copied().collect();
            prop_assert!((ndcg(&RetrievalJudgment::new(ideal, relevant.clone())).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
