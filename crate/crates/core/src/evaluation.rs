//! Scoring of validated answers against a revision's private splits.
//!
//! The service and the local sandbox evaluator both call
//! [`evaluate_answers`], so the same inputs give the same numbers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{RetryPolicy, TextBackend};
use crate::dataset::{DatasetRevision, Version};
use crate::filtering::CriteriaCatalog;
use crate::metrics::{self, answer_segments, MetricReport, QueryInput, RagCriterion, RetrievalJudgment};
use crate::submission::{validate_answers, Answers, Submission, ValidationReport};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("submission is for revision {submitted}, not {expected}")]
    RevisionMismatch { submitted: Version, expected: Version },
    #[error("invalid submission: {0}")]
    Invalid(ValidationReport),
}

pub struct JudgeSetup<'a> {
    pub backend: &'a dyn TextBackend,
    pub catalog: &'a CriteriaCatalog<RagCriterion>,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub revision: Version,
    pub metrics: MetricReport,
    /// Question ids whose judge call failed.
    #[serde(default)]
    pub judge_failures: Vec<String>,
    /// A judge was configured but did not rate every question.
    #[serde(default)]
    pub partial: bool,
}

/// Scores answers that already passed validation against `rev`.
pub fn evaluate_answers(
    answers: &Answers,
    rev: &DatasetRevision,
    judge: Option<&JudgeSetup<'_>>,
) -> Result<Evaluation, EvaluationError> {
    let public = rev.public();
    let answers = validate_answers(&serde_json::to_value(answers).expect("answers serialize"), &public)
        .map_err(EvaluationError::Invalid)?;
    let relevant = rev.relevant_public_ids();
    let private: BTreeMap<&str, _> = rev.private_qa.iter().map(|q| (q.question_id.as_str(), q)).collect();

    let judged: BTreeMap<String, Result<f64, String>> = match judge {
        Some(j) => rev
            .public_questions
            .par_iter()
            .map(|q| {
                let reference = &private[q.question_id.as_str()].answer;
                let candidate = &answers[&q.question_id].model_answer;
                let score = metrics::judge_answer(&q.question, reference, candidate, j.backend, j.catalog, j.retry)
                    .map_err(|e| e.to_string());
                (q.question_id.clone(), score)
            })
            .collect(),
        None => BTreeMap::new(),
    };
    let judge_failures: Vec<String> = judged
        .iter()
        .filter(|(_, r)| r.is_err())
        .map(|(q, _)| q.clone())
        .collect();

    let inputs = rev.public_questions.iter().map(|q| {
        let qa = private[q.question_id.as_str()];
        let answer = &answers[&q.question_id];
        let input = QueryInput {
            qtype: q.qtype,
            retrieval: RetrievalJudgment::new(answer.found_ids.clone(), relevant[&q.question_id].clone()),
            candidate: &answer.model_answer,
            reference: &qa.answer,
            segments: answer_segments(&qa.answer, &qa.answer_entities),
            judge_score: judged.get(&q.question_id).and_then(|r| r.as_ref().ok().copied()),
        };
        (q.question_id.clone(), input)
    });
    let metrics = metrics::build_report(inputs);
    Ok(Evaluation {
        revision: rev.version,
        metrics,
        partial: judge.is_some() && !judge_failures.is_empty(),
        judge_failures,
    })
}

pub fn evaluate_submission(
    sub: &Submission,
    rev: &DatasetRevision,
    judge: Option<&JudgeSetup<'_>>,
) -> Result<Evaluation, EvaluationError> {
    if sub.revision != rev.version {
        return Err(EvaluationError::RevisionMismatch {
            submitted: sub.revision,
            expected: rev.version,
        });
    }
    evaluate_answers(&sub.answers, rev, judge)
}

/// The perfect submission for `rev`: relevant documents first and the
/// canonical answer verbatim.
pub fn oracle_answers(rev: &DatasetRevision) -> Answers {
    let relevant = rev.relevant_public_ids();
    rev.private_qa
        .iter()
        .map(|qa| {
            let entry = crate::submission::AnswerEntry {
                found_ids: relevant[&qa.question_id].iter().copied().collect(),
                model_answer: qa.answer.clone(),
            };
            (qa.question_id.clone(), entry)
        })
        .collect()
}
