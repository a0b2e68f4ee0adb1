//! End-to-end generation run: documents to knowledge graph, typed
//! subgraphs, generated pairs, filter cascade and the final test set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{RetryPolicy, TextBackend};
use crate::dataset::DocumentRecord;
use crate::filtering::{
    finalize_testset, run_cascade, CascadeOutcome, FilterBackends, FilterConfig, FilterError, TestSet,
};
use crate::generation::{generate_qa, GenerationConfig, PromptCatalog, QAPair};
use crate::kg::{extract_triplets, filter_novel, DocId, KgError, KnowledgeBase, KnowledgeGraph, Normalizer};
use crate::sampler::{enumerate_subgraphs, EnumerationLimits, QuestionType};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

pub struct PipelineBackends<'a> {
    pub extractor: &'a dyn TextBackend,
    pub normalizer: Option<Normalizer<'a>>,
    pub knowledge_base: Option<&'a dyn KnowledgeBase>,
    pub generator: &'a dyn TextBackend,
    pub filters: FilterBackends<'a>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub retry: RetryPolicy,
    pub limits: EnumerationLimits,
    pub catalog: PromptCatalog,
    pub generation: GenerationConfig,
    pub filter: FilterConfig,
    pub quota: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            limits: EnumerationLimits::default(),
            catalog: PromptCatalog::english(),
            generation: GenerationConfig::default(),
            filter: FilterConfig::default(),
            quota: 150,
            seed: 0,
        }
    }
}

/// Counters for the graph-building step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub documents: usize,
    pub failed_documents: Vec<DocId>,
    pub extracted: usize,
    pub skipped_lines: usize,
    pub self_loops: usize,
    pub unnormalized: usize,
    pub known_facts: usize,
    pub merged_duplicates: usize,
}

pub struct PipelineRun {
    pub graph: KnowledgeGraph,
    pub graph_stats: GraphStats,
    pub subgraphs: BTreeMap<QuestionType, usize>,
    /// (question type, subgraph index, error) for every failed generation.
    pub generation_failures: Vec<GenerationFailure>,
    pub outcome: CascadeOutcome,
    pub testset: TestSet,
}

/// Extracts, normalizes and novelty-filters every document, then merges
/// the survivors. A document whose extraction fails is recorded and skipped.
pub fn build_graph(
    docs: &[DocumentRecord],
    backends: &PipelineBackends<'_>,
    retry: RetryPolicy,
) -> Result<(KnowledgeGraph, GraphStats), KgError> {
    let per_doc: Vec<(DocId, Result<_, KgError>)> = docs
        .par_iter()
        .map(|d| {
            let extracted = extract_triplets(d.internal_id, &d.text, backends.extractor, retry).map(|ex| {
                let before = ex.triplets.len();
                let normalized: Vec<_> = match &backends.normalizer {
                    Some(n) => ex.triplets.iter().map(|t| n.normalize(t, &d.text).0).collect(),
                    None => ex.triplets,
                };
                let unnormalized = normalized.iter().filter(|t| t.flags.unnormalized).count();
                let kept = match backends.knowledge_base {
                    Some(kb) => filter_novel(normalized, kb),
                    None => normalized,
                };
                (before, ex.skipped_lines, ex.self_loops, unnormalized, kept)
            });
            (d.internal_id, extracted)
        })
        .collect();

    let mut stats = GraphStats {
        documents: docs.len(),
        ..GraphStats::default()
    };
    let mut graph = KnowledgeGraph::new();
    for (doc, result) in per_doc {
        match result {
            Ok((before, skipped, loops, unnormalized, kept)) => {
                stats.extracted += before;
                stats.skipped_lines += skipped;
                stats.self_loops += loops;
                stats.unnormalized += unnormalized;
                stats.known_facts += before - kept.len();
                let n = kept.len();
                let inserted = graph.merge(kept)?;
                stats.merged_duplicates += n - inserted;
            }
            Err(err) if matches!(err, KgError::Backend { .. } | KgError::MalformedOutput { .. }) => {
                log::warn!("document {doc} skipped: {err}");
                stats.failed_documents.push(doc);
            }
            Err(err) => return Err(err),
        }
    }
    Ok((graph, stats))
}

/// (type, subgraph index, reason) for a generation that failed.
pub type GenerationFailure = (QuestionType, usize, String);

/// One generation attempt per enumerated subgraph. Pair ids are assigned
/// in (question type, subgraph order), so they are stable for a graph.
pub fn generate_pairs(
    graph: &KnowledgeGraph,
    generator: &dyn TextBackend,
    config: &PipelineConfig,
) -> (Vec<QAPair>, BTreeMap<QuestionType, usize>, Vec<GenerationFailure>) {
    let mut jobs = Vec::new();
    let mut counts = BTreeMap::new();
    for qtype in QuestionType::ALL {
        let subgraphs = enumerate_subgraphs(graph, qtype, config.limits);
        counts.insert(qtype, subgraphs.len());
        jobs.extend(subgraphs.into_iter().enumerate().map(|(i, sg)| (qtype, i, sg)));
    }
    let results: Vec<_> = jobs
        .par_iter()
        .enumerate()
        .map(|(id, (qtype, i, sg))| {
            let r = generate_qa(id as u64, graph, sg, generator, &config.catalog, config.generation);
            (*qtype, *i, r)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (qtype, i, r) in results {
        match r {
            Ok(qa) => pairs.push(qa),
            Err(e) => failures.push((qtype, i, e.to_string())),
        }
    }
    (pairs, counts, failures)
}

pub fn run_pipeline(
    docs: &[DocumentRecord],
    backends: &PipelineBackends<'_>,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    let (graph, graph_stats) = build_graph(docs, backends, config.retry)?;
    let (pairs, subgraphs, generation_failures) = generate_pairs(&graph, backends.generator, config);
    let texts: BTreeMap<DocId, String> = docs.iter().map(|d| (d.internal_id, d.text.clone())).collect();
    let outcome = run_cascade(pairs, &texts, &backends.filters, &config.filter);
    let testset = finalize_testset(outcome.passed.clone(), config.quota, config.seed)?;
    Ok(PipelineRun {
        graph,
        graph_stats,
        subgraphs,
        generation_failures,
        outcome,
        testset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::fixture;

    #[test]
    fn fixture_corpus_fills_a_small_quota() {
        let corpus = fixture::Corpus::new(12);
        let backends = fixture::Backends::new(&corpus);
        let config = PipelineConfig {
            retry: RetryPolicy::immediate(),
            quota: 3,
            seed: 5,
            ..PipelineConfig::default()
        };
        let docs = corpus.records();
        let run = run_pipeline(&docs, &backends.pipeline(), &config).unwrap();
        assert!(run.graph_stats.failed_documents.is_empty());
        assert_eq!(run.graph.len(), corpus.fact_count());
        assert!(run.generation_failures.is_empty());
        assert_eq!(run.testset.len(), 12);
        for qtype in QuestionType::ALL {
            assert!(run.subgraphs[&qtype] >= 3, "{qtype}");
        }
        let again = run_pipeline(&docs, &backends.pipeline(), &config).unwrap();
        assert_eq!(again.testset, run.testset);
    }

    #[test]
    fn failing_extraction_skips_the_document() {
        let corpus = fixture::Corpus::new(4);
        let backends = fixture::Backends::new(&corpus);
        let mut pipeline = backends.pipeline();
        let broken = crate::backend::ScriptedBackend::new();
        pipeline.extractor = &broken;
        let (graph, stats) = build_graph(&corpus.records(), &pipeline, RetryPolicy::immediate()).unwrap();
        assert!(graph.is_empty());
        assert_eq!(stats.failed_documents.len(), 4);
    }
}
