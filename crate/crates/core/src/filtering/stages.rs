//! Acceptability, named-entity and closed-book stages.

use crate::backend::{BackendError, RetryPolicy, TextBackend};
use crate::generation::QAPair;
use crate::metrics;
use crate::text;

/// Linguistic acceptability scorer returning a value in [0, 1].
pub trait AcceptabilityScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, BackendError>;
}

impl<F> AcceptabilityScorer for F
where
    F: Fn(&str) -> Result<f64, BackendError> + Send + Sync,
{
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        self(text)
    }
}

/// Scores a question; out-of-range scores are treated as backend errors.
pub fn score_acceptability(question: &str, scorer: &dyn AcceptabilityScorer) -> Result<f64, BackendError> {
    let score = scorer.score(question)?;
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(BackendError::Fatal(format!(
            "acceptability score {score} outside [0, 1]"
        )))
    }
}

/// Named-entity recognizer returning entity surface strings.
pub trait EntityRecognizer: Send + Sync {
    fn recognize(&self, text: &str) -> Result<Vec<String>, BackendError>;
}

/// Fallback recognizer: runs of two or more capitalized tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicRecognizer;

impl EntityRecognizer for HeuristicRecognizer {
    fn recognize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        let mut spans = Vec::new();
        let mut run: Vec<&str> = Vec::new();
        let flush = |run: &mut Vec<&str>, spans: &mut Vec<String>| {
            if run.len() >= 2 {
                spans.push(run.join(" "));
            }
            run.clear();
        };
        for raw in text.split_whitespace() {
            let token = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let capitalized = token.chars().next().is_some_and(char::is_uppercase);
            if capitalized {
                run.push(token);
                // Punctuation after a token closes the span.
                if raw.ends_with(|c: char| !c.is_alphanumeric() && c != '-') {
                    flush(&mut run, &mut spans);
                }
            } else {
                flush(&mut run, &mut spans);
            }
        }
        flush(&mut run, &mut spans);
        Ok(spans)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerCheck {
    pub found: bool,
    pub matched: Vec<String>,
    /// The configured recognizer failed and [`HeuristicRecognizer`] was used.
    pub fallback_used: bool,
}

/// Whether any named entity of the source documents occurs in the question
/// or the answer (casefolded, punctuation-insensitive).
pub fn check_named_entities(qa: &QAPair, doc_texts: &[&str], ner: &dyn EntityRecognizer) -> NerCheck {
    let mut fallback_used = false;
    let mut entities = Vec::new();
    for doc in doc_texts {
        match ner.recognize(doc) {
            Ok(found) => entities.extend(found),
            Err(err) => {
                log::warn!("entity recognizer failed, using heuristic: {err}");
                fallback_used = true;
                entities.extend(HeuristicRecognizer.recognize(doc).unwrap_or_default());
            }
        }
    }
    entities.sort();
    entities.dedup();
    let matched: Vec<String> = entities
        .into_iter()
        .filter(|e| text::contains_normalized(&qa.question, e) || text::contains_normalized(&qa.answer, e))
        .collect();
    NerCheck {
        found: !matched.is_empty(),
        matched,
        fallback_used,
    }
}

pub fn build_closed_book_prompt(question: &str) -> String {
    format!("Answer the question briefly.\nQuestion: {question}\nAnswer:")
}

fn answer_segments(qa: &QAPair) -> Vec<String> {
    let names: Vec<String> = qa.answer_entities.iter().map(|e| e.normalized_form.clone()).collect();
    metrics::answer_segments(&qa.answer, &names)
}

/// Asks each probe the question without context. Returns `Some(false)`
/// (discard) when any probe's reply covers at least `min_ratio` of the
/// answer segments, `Some(true)` otherwise, and `None` when every probe
/// failed.
pub fn closed_book_check(qa: &QAPair, probes: &[&dyn TextBackend], min_ratio: f64, retry: RetryPolicy) -> Option<bool> {
    let prompt = build_closed_book_prompt(&qa.question);
    let segments = answer_segments(qa);
    let mut answered = 0;
    for probe in probes {
        match retry.run(|| probe.complete(&prompt)) {
            Ok(reply) => {
                answered += 1;
                let ratio = metrics::substring_match(&reply, &segments).unwrap_or(0.0);
                if ratio >= min_ratio {
                    return Some(false);
                }
            }
            Err(err) => log::warn!("closed-book probe failed: {err}"),
        }
    }
    (answered > 0).then_some(true)
}
