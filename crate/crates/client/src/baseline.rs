use std::collections::BTreeMap;

use ragbench_core::backend::{Embedder, RetryPolicy, Similarity, TextBackend};
use ragbench_core::dataset::PublicSplits;
use ragbench_core::submission::{AnswerEntry, Answers, Submission};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunk::chunk_documents;
use crate::prompt::{build_answer_prompt, PromptSpec};
use crate::retrieval::{build_index, retrieve_top_k};
use crate::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k: usize,
    /// Generated answers are cut to this many characters.
    pub response_cap: usize,
    pub similarity: Similarity,
    /// Questions answered at once.
    pub workers: usize,
    #[serde(skip)]
    pub retry: RetryPolicy,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 5,
            response_cap: 4000,
            similarity: Similarity::Cosine,
            workers: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub answers: Answers,
    /// Question id to failure note, for questions answered empty.
    pub failures: BTreeMap<String, String>,
}

impl BaselineRun {
    pub fn into_submission(self, system: &str, retriever: &str, generator: &str, public: &PublicSplits) -> Submission {
        Submission {
            system_name: system.to_owned(),
            retriever_name: retriever.to_owned(),
            generator_name: generator.to_owned(),
            revision: public.version,
            answers: self.answers,
        }
    }
}

/// Answers every public question: top-k chunk retrieval, prompt, generate.
///
/// A failing backend call for one question leaves that answer empty and
/// notes the failure; the run goes on.
pub fn run_baseline(
    public: &PublicSplits,
    retriever: &dyn Embedder,
    generator: &dyn TextBackend,
    spec: &PromptSpec,
    config: &BaselineConfig,
) -> Result<BaselineRun, ClientError> {
    spec.validate()?;
    let index = build_index(
        chunk_documents(&public.public_texts),
        retriever,
        spec,
        config.similarity,
        config.retry,
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .expect("thread pool builds");
    let results: Vec<(String, AnswerEntry, Option<String>)> = pool.install(|| {
        public
            .public_questions
            .par_iter()
            .map(|q| {
                let retrieved = match config
                    .retry
                    .run(|| retrieve_top_k(&q.question, &index, retriever, spec, config.k))
                {
                    Ok(r) => r,
                    Err(e) => {
                        let empty = AnswerEntry {
                            found_ids: Vec::new(),
                            model_answer: String::new(),
                        };
                        return (q.question_id.clone(), empty, Some(format!("retrieval: {e}")));
                    }
                };
                let found_ids = retrieved.iter().map(|r| r.chunk.doc_public_id).collect();
                let chunks: Vec<_> = retrieved.iter().map(|r| r.chunk).collect();
                let prompt = build_answer_prompt(&q.question, &chunks, spec).expect("spec validated");
                let (model_answer, note) = match config.retry.run(|| generator.complete(&prompt)) {
                    Ok(a) => (a.trim().chars().take(config.response_cap).collect(), None),
                    Err(e) => (String::new(), Some(format!("generation: {e}"))),
                };
                (
                    q.question_id.clone(),
                    AnswerEntry {
                        found_ids,
                        model_answer,
                    },
                    note,
                )
            })
            .collect()
    });
    let mut run = BaselineRun {
        answers: Answers::new(),
        failures: BTreeMap::new(),
    };
    for (qid, entry, note) in results {
        if let Some(note) = note {
            log::warn!("question {qid}: {note}");
            run.failures.insert(qid.clone(), note);
        }
        run.answers.insert(qid, entry);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ragbench_core::backend::{BackendError, FnBackend, HashEmbedder, ScriptedBackend};
    use ragbench_core::dataset::{PublicQuestion, PublicText, Version};
    use ragbench_core::QuestionType;

    fn public() -> PublicSplits {
        PublicSplits {
            version: Version::new(1, 0, 0),
            public_texts: vec![
                PublicText {
                    public_id: 0,
                    text: "Lighthouse keepers of Port Elmsworth meet every spring.".into(),
                },
                PublicText {
                    public_id: 1,
                    text: "Keisuke Chiba voices Morty Smith in the Japanese dub.".into(),
                },
                PublicText {
                    public_id: 2,
                    text: "Orchard harvests are early this year.".into(),
                },
            ],
            public_questions: vec![
                PublicQuestion {
                    question_id: "0".into(),
                    question: "Who voices Morty Smith in the Japanese dub?".into(),
                    qtype: QuestionType::Simple,
                },
                PublicQuestion {
                    question_id: "1".into(),
                    question: "When do lighthouse keepers meet?".into(),
                    qtype: QuestionType::Simple,
                },
            ],
        }
    }

    fn config() -> BaselineConfig {
        BaselineConfig {
            retry: RetryPolicy::immediate(),
            ..BaselineConfig::default()
        }
    }

    #[test]
    fn unique_lexical_match_ranks_first() {
        let echo = FnBackend(|p: &str| {
            let ctx = p.split("Context:\n").nth(1).unwrap_or_default();
            Ok(ctx.split("\n\n").next().unwrap_or_default().to_owned())
        });
        let run = run_baseline(
            &public(),
            &HashEmbedder::default(),
            &echo,
            &PromptSpec::default(),
            &config(),
        )
        .unwrap();
        assert_eq!(run.answers["0"].found_ids[0], 1);
        assert_eq!(run.answers["1"].found_ids[0], 0);
        assert_eq!(run.answers["0"].found_ids.len(), 3);
        // The echo generator returns the top chunk verbatim.
        assert_eq!(run.answers["0"].model_answer, public().public_texts[1].text);
        assert!(run.failures.is_empty());
    }

    #[test]
    fn failures_leave_empty_answers() {
        let broken = FnBackend(|p: &str| {
            if p.contains("lighthouse") {
                Err(BackendError::Fatal("down".into()))
            } else {
                Ok("fine".into())
            }
        });
        let run = run_baseline(
            &public(),
            &HashEmbedder::default(),
            &broken,
            &PromptSpec::default(),
            &config(),
        )
        .unwrap();
        assert_eq!(run.answers["1"].model_answer, "");
        assert!(run.failures["1"].starts_with("generation"));
        assert_eq!(run.answers["0"].model_answer, "fine");
    }

    #[test]
    fn response_cap_and_determinism() {
        let long = ScriptedBackend::constant("x".repeat(50));
        let cfg = BaselineConfig {
            response_cap: 7,
            ..config()
        };
        let a = run_baseline(&public(), &HashEmbedder::default(), &long, &PromptSpec::default(), &cfg).unwrap();
        assert_eq!(a.answers["0"].model_answer, "xxxxxxx");
        let b = run_baseline(&public(), &HashEmbedder::default(), &long, &PromptSpec::default(), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let sub = a.into_submission("s", "r", "g", &public());
        assert_eq!(sub.revision, Version::new(1, 0, 0));
    }
}
