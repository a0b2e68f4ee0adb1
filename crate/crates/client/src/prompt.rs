use serde::{Deserialize, Serialize};

use crate::chunk::Chunk;
use crate::ClientError;

pub const DEFAULT_TEMPLATE: &str =
    "Answer the question using the provided context. Reply with the answer only.\n\nContext:\n{context}\n\nQuestion: {question}\nAnswer:";

/// How questions and chunks are presented to the retriever and generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub template: String,
    pub query_prefix: String,
    pub doc_prefix: String,
    /// Upper bound on the filled prompt, in characters.
    pub max_context_chars: usize,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.to_owned(),
            query_prefix: "search_query: ".to_owned(),
            doc_prefix: "search_document: ".to_owned(),
            max_context_chars: 8000,
        }
    }
}

impl PromptSpec {
    /// The template must hold `{context}` and `{question}` exactly once.
    pub fn validate(&self) -> Result<(), ClientError> {
        for slot in ["{context}", "{question}"] {
            let n = self.template.matches(slot).count();
            if n != 1 {
                return Err(ClientError::PromptSpec(format!("{slot} occurs {n} times")));
            }
        }
        Ok(())
    }

    fn fill(&self, context: &str, question: &str) -> String {
        // Fill the question last so braces inside the context stay literal.
        let (head, tail) = self.template.split_once("{context}").expect("validated template");
        format!(
            "{}{context}{}",
            head.replace("{question}", question),
            tail.replace("{question}", question)
        )
    }
}

const SEPARATOR: &str = "\n\n";

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Fills the template with the chunks in retrieval order.
///
/// When the prompt would exceed `max_context_chars`, chunks are dropped
/// from the tail; if a single chunk is still too long it is cut to fit.
/// The question is never shortened: if the prompt without context is
/// already over the limit, the context is left empty.
pub fn build_answer_prompt(question: &str, chunks: &[&Chunk], spec: &PromptSpec) -> Result<String, ClientError> {
    spec.validate()?;
    let base = char_len(&spec.fill("", question));
    let budget = spec.max_context_chars.saturating_sub(base);
    let mut kept: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let total = |parts: &[&str]| {
        parts.iter().map(|p| char_len(p)).sum::<usize>() + SEPARATOR.len() * parts.len().saturating_sub(1)
    };
    while kept.len() > 1 && total(&kept) > budget {
        kept.pop();
    }
    let context = match kept.first() {
        Some(only) if kept.len() == 1 && char_len(only) > budget => only.chars().take(budget).collect(),
        _ => kept.join(SEPARATOR),
    };
    Ok(spec.fill(&context, question))
}
