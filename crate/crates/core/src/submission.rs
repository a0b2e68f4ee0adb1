//! Submission format and its validation against a revision's public splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{PublicSplits, Version};

/// One answered question: retrieved public document ids in rank order
/// (repeats allowed) and the generated answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEntry {
    pub found_ids: Vec<u64>,
    pub model_answer: String,
}

/// The results file: question id to answer.
pub type Answers = BTreeMap<String, AnswerEntry>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub system_name: String,
    pub retriever_name: String,
    pub generator_name: String,
    pub revision: Version,
    pub answers: Answers,
}

/// Identifies one evaluated system on one revision.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SystemKey {
    pub system_name: String,
    pub retriever_name: String,
    pub generator_name: String,
}

impl Submission {
    pub fn system_key(&self) -> SystemKey {
        SystemKey {
            system_name: self.system_name.clone(),
            retriever_name: self.retriever_name.clone(),
            generator_name: self.generator_name.clone(),
        }
    }
}

/// Everything wrong with a submission. Empty means accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub parse_errors: Vec<String>,
    pub missing_questions: Vec<String>,
    pub extra_questions: Vec<String>,
    pub non_integer_ids: Vec<String>,
    pub unknown_ids: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.parse_errors.is_empty()
            && self.missing_questions.is_empty()
            && self.extra_questions.is_empty()
            && self.non_integer_ids.is_empty()
            && self.unknown_ids.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let mut add = |label: &str, items: &[String]| {
            if !items.is_empty() {
                parts.push(format!("{label}: {}", items.join(", ")));
            }
        };
        add("parse errors", &self.parse_errors);
        add("missing questions", &self.missing_questions);
        add("extra questions", &self.extra_questions);
        add("non-integer found_ids", &self.non_integer_ids);
        add("unknown public ids", &self.unknown_ids);
        f.write_str(&parts.join("; "))
    }
}

fn numeric_order(ids: &mut [String]) {
    ids.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
}

/// Checks a raw results object against the public splits. Returns the
/// typed answers only when the report is empty.
pub fn validate_answers(raw: &Value, public: &PublicSplits) -> Result<Answers, ValidationReport> {
    let mut report = ValidationReport::default();
    let Some(map) = raw.as_object() else {
        report
            .parse_errors
            .push("answers must be an object keyed by question id".into());
        return Err(report);
    };
    let expected = public.question_ids();
    let known = public.public_ids();
    let mut answers = Answers::new();
    for (qid, entry) in map {
        if !expected.contains(qid) {
            let numeric = !qid.is_empty() && qid.len() <= 20 && qid.bytes().all(|b| b.is_ascii_digit());
            report.extra_questions.push(if numeric {
                qid.clone()
            } else {
                "<non-numeric key>".to_owned()
            });
            continue;
        }
        let Some(obj) = entry.as_object() else {
            report
                .parse_errors
                .push(format!("question {qid}: answer must be an object"));
            continue;
        };
        let model_answer = match obj.get("model_answer") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                report
                    .parse_errors
                    .push(format!("question {qid}: model_answer must be a string"));
                continue;
            }
            None => {
                report
                    .parse_errors
                    .push(format!("question {qid}: model_answer missing"));
                continue;
            }
        };
        let Some(ids) = obj.get("found_ids").and_then(Value::as_array) else {
            report
                .parse_errors
                .push(format!("question {qid}: found_ids must be a list"));
            continue;
        };
        let mut found_ids = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            match id.as_u64() {
                Some(n) if known.contains(&n) => found_ids.push(n),
                Some(n) => report.unknown_ids.push(format!("question {qid}: {n}")),
                // The offending value is not echoed back.
                None => report.non_integer_ids.push(format!("question {qid}: found_ids[{i}]")),
            }
        }
        answers.insert(
            qid.clone(),
            AnswerEntry {
                found_ids,
                model_answer,
            },
        );
    }
    let present: BTreeSet<&String> = map.keys().collect();
    report.missing_questions = expected.iter().filter(|q| !present.contains(q)).cloned().collect();
    numeric_order(&mut report.missing_questions);
    numeric_order(&mut report.extra_questions);
    if report.is_empty() {
        Ok(answers)
    } else {
        Err(report)
    }
}

fn text_field(obj: &serde_json::Map<String, Value>, key: &str, report: &mut ValidationReport) -> String {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        _ => {
            report.parse_errors.push(format!("{key} must be a non-empty string"));
            String::new()
        }
    }
}

/// Validates a full submission envelope, including its revision.
pub fn validate_submission(raw: &Value, public: &PublicSplits) -> Result<Submission, ValidationReport> {
    let mut report = ValidationReport::default();
    let Some(obj) = raw.as_object() else {
        report.parse_errors.push("submission must be a JSON object".into());
        return Err(report);
    };
    let system_name = text_field(obj, "system_name", &mut report);
    let retriever_name = text_field(obj, "retriever_name", &mut report);
    let generator_name = text_field(obj, "generator_name", &mut report);
    let revision = match obj.get("revision").and_then(Value::as_str).map(str::parse::<Version>) {
        Some(Ok(v)) if v == public.version => Some(v),
        Some(Ok(v)) => {
            report
                .parse_errors
                .push(format!("revision {v} does not match {}", public.version));
            None
        }
        _ => {
            report.parse_errors.push("revision must be a version string".into());
            None
        }
    };
    let answers = match obj.get("answers") {
        Some(a) => match validate_answers(a, public) {
            Ok(a) => Some(a),
            Err(r) => {
                report.parse_errors.extend(r.parse_errors);
                report.missing_questions = r.missing_questions;
                report.extra_questions = r.extra_questions;
                report.non_integer_ids = r.non_integer_ids;
                report.unknown_ids = r.unknown_ids;
                None
            }
        },
        None => {
            report.parse_errors.push("answers missing".into());
            None
        }
    };
    match (revision, answers) {
        (Some(revision), Some(answers)) if report.is_empty() => Ok(Submission {
            system_name,
            retriever_name,
            generator_name,
            revision,
            answers,
        }),
        _ => Err(report),
    }
}
