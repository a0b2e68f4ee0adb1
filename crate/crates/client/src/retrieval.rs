use ragbench_core::backend::{BackendError, Embedder, RetryPolicy, Similarity};
use rayon::prelude::*;

use crate::chunk::Chunk;
use crate::prompt::PromptSpec;
use crate::ClientError;

/// One vector per chunk, embedded from the document prefix plus the chunk.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: Vec<(Chunk, Vec<f32>)>,
    similarity: Similarity,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Chunk, Vec<f32>)] {
        &self.entries
    }
}

pub fn build_index(
    chunks: Vec<Chunk>,
    embedder: &dyn Embedder,
    spec: &PromptSpec,
    similarity: Similarity,
    retry: RetryPolicy,
) -> Result<VectorIndex, ClientError> {
    let entries = chunks
        .into_par_iter()
        .map(|chunk| {
            let input = format!("{}{}", spec.doc_prefix, chunk.text);
            match retry.run(|| embedder.embed(&input)) {
                Ok(v) => Ok((chunk, v)),
                Err(source) => Err(ClientError::Embedding {
                    doc: chunk.doc_public_id,
                    start: chunk.start,
                    end: chunk.end,
                    source,
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorIndex { entries, similarity })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub chunk: &'a Chunk,
    pub score: f64,
}

/// The `k` most similar chunks, best first. Equal scores are ordered by
/// (document id, start).
pub fn retrieve_top_k<'a>(
    question: &str,
    index: &'a VectorIndex,
    embedder: &dyn Embedder,
    spec: &PromptSpec,
    k: usize,
) -> Result<Vec<Retrieved<'a>>, BackendError> {
    if index.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let query = embedder.embed(&format!("{}{}", spec.query_prefix, question))?;
    let mut scored: Vec<Retrieved<'a>> = index
        .entries
        .iter()
        .map(|(chunk, v)| Retrieved {
            chunk,
            score: index.similarity.score(&query, v),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk.doc_public_id.cmp(&b.chunk.doc_public_id))
            .then_with(|| a.chunk.start.cmp(&b.chunk.start))
    });
    scored.truncate(k);
    Ok(scored)
}
