//! Question/answer generation from typed subgraphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, RetryPolicy, TextBackend};
use crate::filtering::FilterVerdict;
use crate::kg::{DocId, Entity, EntityId, KnowledgeGraph, Triplet};
use crate::sampler::{QuestionType, Role, Subgraph};

/// A generated question with its canonical answer and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: u64,
    pub question: String,
    pub answer: String,
    pub answer_entities: Vec<Entity>,
    pub qtype: QuestionType,
    pub subgraph: Subgraph,
    /// Copies of the subgraph's triplets, in subgraph order.
    pub facts: Vec<Triplet>,
    pub source_docs: BTreeSet<DocId>,
    #[serde(default)]
    pub verdicts: Vec<FilterVerdict>,
}

impl QAPair {
    /// Normalized form of every subgraph entity.
    pub fn entity_forms(&self) -> BTreeMap<EntityId, String> {
        self.facts
            .iter()
            .flat_map(|t| [&t.subject, &t.object])
            .map(|e| (e.id.clone(), e.normalized_form.clone()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("generation backend failed: {0}")]
    Backend(#[from] BackendError),
    #[error("malformed generation output: {raw:?}")]
    Malformed { raw: String },
    #[error("subgraph violates its template: {0}")]
    InvalidSubgraph(String),
    #[error("invalid prompt catalog: {0}")]
    Catalog(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::Backend(e) if e.is_transient())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogTemplates {
    simple: String,
    set: String,
    multi_hop: String,
    conditional: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogFile {
    locale: String,
    question_label: String,
    answer_label: String,
    templates: CatalogTemplates,
}

/// Per-locale generation prompts, one template per question type.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    file: CatalogFile,
}

const EN_CATALOG: &str = include_str!("../catalogs/generation.en.toml");
const RU_CATALOG: &str = include_str!("../catalogs/generation.ru.toml");

impl PromptCatalog {
    pub fn parse(toml_text: &str) -> Result<Self, GenerationError> {
        let file: CatalogFile = toml::from_str(toml_text).map_err(|e| GenerationError::Catalog(e.to_string()))?;
        Ok(Self { file })
    }

    /// Built-in catalog for `"en"` or `"ru"`.
    pub fn builtin(locale: &str) -> Option<Self> {
        let text = match locale {
            "en" => EN_CATALOG,
            "ru" => RU_CATALOG,
            _ => return None,
        };
        Some(Self::parse(text).expect("built-in catalog parses"))
    }

    pub fn english() -> Self {
        Self::builtin("en").expect("english catalog")
    }

    pub fn locale(&self) -> &str {
        &self.file.locale
    }

    fn template(&self, qtype: QuestionType) -> &str {
        let t = &self.file.templates;
        match qtype {
            QuestionType::Simple => &t.simple,
            QuestionType::Set => &t.set,
            QuestionType::MultiHop => &t.multi_hop,
            QuestionType::Conditional => &t.conditional,
        }
    }
}

fn join_forms(graph: &KnowledgeGraph, ids: &[&EntityId]) -> String {
    ids.iter()
        .filter_map(|id| graph.entity(id))
        .map(|e| e.normalized_form.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Comma-space join of the answer entities in subgraph order.
pub fn render_answer(graph: &KnowledgeGraph, sg: &Subgraph) -> String {
    join_forms(graph, &sg.answer_entities(graph))
}

/// Fills the catalog template for the subgraph's question type.
pub fn build_generation_prompt(graph: &KnowledgeGraph, sg: &Subgraph, catalog: &PromptCatalog) -> String {
    let facts = sg
        .triplets
        .iter()
        .map(|&i| graph.triplet(i).render())
        .collect::<Vec<_>>()
        .join("\n");
    let in_order = sg.entities_in_order(graph);
    let mentioned: Vec<&EntityId> = in_order
        .iter()
        .copied()
        .filter(|id| matches!(sg.roles.get(*id), Some(Role::QuestionSlot | Role::Shared)))
        .collect();
    let hidden: Vec<&EntityId> = sg.entities_with(Role::Bridge).collect();
    catalog
        .template(sg.qtype)
        .trim_start()
        .replace("{qtype}", sg.qtype.as_str())
        .replace("{facts}", &facts)
        .replace("{question_entities}", &join_forms(graph, &mentioned))
        .replace("{answer}", &render_answer(graph, sg))
        .replace("{hidden}", &join_forms(graph, &hidden))
}

fn labelled_line<'a>(raw: &'a str, label: &str) -> Option<&'a str> {
    let label = label.to_lowercase();
    raw.lines().find_map(|line| {
        let line = line.trim();
        let head: String = line.chars().take(label.chars().count()).collect();
        (head.to_lowercase() == label).then(|| line[head.len()..].trim())
    })
}

/// Splits a `Question: … / Answer: …` reply.
pub fn parse_generation(raw: &str, catalog: &PromptCatalog) -> Option<(String, String)> {
    let question = labelled_line(raw, &catalog.file.question_label).or_else(|| labelled_line(raw, "Question:"))?;
    let answer = labelled_line(raw, &catalog.file.answer_label).or_else(|| labelled_line(raw, "Answer:"))?;
    (!question.is_empty() && !answer.is_empty()).then(|| (question.to_owned(), answer.to_owned()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerationConfig {
    pub retry: RetryPolicy,
    /// Extra attempts after a malformed reply, at most 2.
    pub malformed_retries: u32,
}

/// Generates a question/answer pair for `sg`.
///
/// Question type, answer entities, facts and provenance are taken from the
/// subgraph; only the question and answer wording come from the backend.
pub fn generate_qa(
    id: u64,
    graph: &KnowledgeGraph,
    sg: &Subgraph,
    backend: &dyn TextBackend,
    catalog: &PromptCatalog,
    config: GenerationConfig,
) -> Result<QAPair, GenerationError> {
    sg.check(graph).map_err(GenerationError::InvalidSubgraph)?;
    let prompt = build_generation_prompt(graph, sg, catalog);
    let attempts = 1 + config.malformed_retries.min(2);
    let mut last_raw = String::new();
    for _ in 0..attempts {
        let raw = config.retry.run(|| backend.complete(&prompt))?;
        if let Some((question, answer)) = parse_generation(&raw, catalog) {
            let facts: Vec<Triplet> = sg.triplets.iter().map(|&i| graph.triplet(i).clone()).collect();
            return Ok(QAPair {
                id,
                question,
                answer,
                answer_entities: sg
                    .answer_entities(graph)
                    .into_iter()
                    .filter_map(|e| graph.entity(e).cloned())
                    .collect(),
                qtype: sg.qtype,
                subgraph: sg.clone(),
                source_docs: facts.iter().map(|t| t.source_doc).collect(),
                facts,
                verdicts: Vec::new(),
            });
        }
        last_raw = raw;
    }
    Err(GenerationError::Malformed { raw: last_raw })
}
